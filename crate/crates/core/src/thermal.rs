//! Bose-Einstein statistics on an `M`-site ring and sampling of the
//! quantum ensemble of classical initial conditions.
//!
//! Chemical potentials are parametrised as `μ = −J − eˣ`, which keeps every
//! occupation finite and positive and lets the gap `E_k − μ` be evaluated
//! without cancellation near the band bottom.

use crate::error::{Error, Result};
use crate::exec::{map_chunks, Execution};
use crate::fourier;
use crate::lattice::{FieldState, Region, SiteGraph};
use crate::rng::{self, Purpose};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

/// Number of trajectories used unless configured otherwise.
pub const DEFAULT_TRAJECTORIES: usize = 2048;

const MU_TOL: f64 = 1e-12;
const PAIR_TOL: f64 = 1e-11;

/// Single-particle energy `−J cos(2πk/M)` of Bloch mode `k`.
pub fn dispersion(k: usize, m: usize, hop: f64) -> Result<f64> {
    if k >= m {
        return Err(Error::ModeIndex { k, m });
    }
    Ok(-hop * (2.0 * PI * k as f64 / m as f64).cos())
}

/// `E_k + J = 2J sin²(πk/M)`, exact near the band bottom.
fn gap(k: usize, m: usize, hop: f64) -> f64 {
    let s = (PI * k as f64 / m as f64).sin();
    2.0 * hop * s * s
}

/// Bose-Einstein occupation `1/(e^{β(E−μ)} − 1)`.
pub fn be_occupation(energy: f64, beta: f64, mu: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    if !(mu < energy) {
        return Err(Error::DivergentOccupation { mu, energy });
    }
    Ok(1.0 / (beta * (energy - mu)).exp_m1())
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("beta must be positive and finite, got {beta}")))
    }
}

fn check_ring(m: usize, hop: f64) -> Result<()> {
    if m == 0 || !(hop > 0.0) {
        return Err(Error::InvalidParameter(format!("need m >= 1 and J > 0, got m = {m}, J = {hop}")));
    }
    Ok(())
}

/// Occupations with `μ = −J − eˣ`.
fn occupations_x(beta: f64, x: f64, m: usize, hop: f64) -> impl Iterator<Item = f64> {
    let shift = x.exp();
    (0..m).map(move |k| 1.0 / (beta * (gap(k, m, hop) + shift)).exp_m1())
}

fn moments_x(beta: f64, x: f64, m: usize, hop: f64) -> (f64, f64) {
    let (mut n, mut e) = (0.0, 0.0);
    for (k, nk) in occupations_x(beta, x, m, hop).enumerate() {
        n += nk;
        e += (gap(k, m, hop) - hop) * nk;
    }
    (n / m as f64, e / m as f64)
}

/// Mean density `n̄ = Σ n_k/M` and mean energy per site `Ē = Σ E_k n_k/M`.
pub fn be_moments(beta: f64, mu: f64, m: usize, hop: f64) -> Result<(f64, f64)> {
    check_beta(beta)?;
    check_ring(m, hop)?;
    if mu == f64::NEG_INFINITY {
        return Ok((0.0, 0.0));
    }
    if !(mu < -hop) {
        return Err(Error::DivergentOccupation { mu, energy: -hop });
    }
    let (mut n, mut e) = (0.0, 0.0);
    for k in 0..m {
        let ek = dispersion(k, m, hop)?;
        let nk = be_occupation(ek, beta, mu)?;
        n += nk;
        e += ek * nk;
    }
    Ok((n / m as f64, e / m as f64))
}

/// Finds `x` with `f(x) = 0` for a strictly decreasing `f`, expanding the
/// bracket from `start` as needed.
fn decreasing_root(f: impl Fn(f64) -> f64, start: f64, tol: f64, what: &str) -> Result<f64> {
    let (mut lo, mut hi) = (start - 1.0, start + 1.0);
    let mut step = 1.0;
    for _ in 0..200 {
        if f(lo) > 0.0 {
            break;
        }
        hi = lo;
        lo -= step;
        step *= 2.0;
    }
    step = 1.0;
    for _ in 0..200 {
        if f(hi) < 0.0 {
            break;
        }
        lo = hi;
        hi += step;
        step *= 2.0;
    }
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo > 0.0 && fhi < 0.0) {
        return Err(Error::NoConvergence(format!("could not bracket {what}")));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Chemical potential giving mean density `n_target` at inverse temperature `beta`.
pub fn solve_mu(beta: f64, n_target: f64, m: usize, hop: f64) -> Result<f64> {
    check_beta(beta)?;
    check_ring(m, hop)?;
    if !(n_target > 0.0 && n_target.is_finite()) {
        return Err(Error::InvalidParameter(format!("density must be positive, got {n_target}")));
    }
    let x = decreasing_root(
        |x| (moments_x(beta, x, m, hop).0 - n_target) / n_target,
        0.0,
        MU_TOL,
        "chemical potential",
    )?;
    Ok(-hop - x.exp())
}

/// A Bose-Einstein state of an `m`-site ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalPoint {
    /// Inverse temperature; zero for the infinite-temperature limit.
    pub beta: f64,
    /// Chemical potential; `−∞` at infinite temperature.
    pub mu: f64,
    pub n_bar: f64,
    /// Mean kinetic energy per site.
    pub e_bar: f64,
    pub m: usize,
    pub hop: f64,
}

impl ThermalPoint {
    pub fn from_beta_mu(beta: f64, mu: f64, m: usize, hop: f64) -> Result<ThermalPoint> {
        let (n_bar, e_bar) = be_moments(beta, mu, m, hop)?;
        Ok(ThermalPoint { beta, mu, n_bar, e_bar, m, hop })
    }

    pub fn from_beta_density(beta: f64, n_bar: f64, m: usize, hop: f64) -> Result<ThermalPoint> {
        if beta == 0.0 {
            return ThermalPoint::infinite_temperature(n_bar, m, hop);
        }
        let mu = solve_mu(beta, n_bar, m, hop)?;
        ThermalPoint::from_beta_mu(beta, mu, m, hop)
    }

    pub fn from_density_energy(n_bar: f64, e_bar: f64, m: usize, hop: f64) -> Result<ThermalPoint> {
        solve_beta_mu(n_bar, e_bar, m, hop)
    }

    /// `β → 0` at fixed density: every mode holds `n̄` particles.
    pub fn infinite_temperature(n_bar: f64, m: usize, hop: f64) -> Result<ThermalPoint> {
        check_ring(m, hop)?;
        if !(n_bar > 0.0) {
            return Err(Error::InvalidParameter(format!("density must be positive, got {n_bar}")));
        }
        Ok(ThermalPoint { beta: 0.0, mu: f64::NEG_INFINITY, n_bar, e_bar: 0.0, m, hop })
    }

    /// Mode occupations `n_k`, `k = 0..M`. With `shifted` the distribution is
    /// translated by half the Brillouin zone (negative temperature).
    pub fn occupations(&self, shifted: bool) -> Vec<f64> {
        let m = self.m;
        let base: Vec<f64> = if self.beta == 0.0 {
            vec![self.n_bar; m]
        } else {
            (0..m)
                .map(|k| 1.0 / (self.beta * (gap(k, m, self.hop) + (-self.hop - self.mu))).exp_m1())
                .collect()
        };
        if !shifted {
            return base;
        }
        (0..m).map(|k| base[(k + m - m / 2) % m]).collect()
    }

    /// Mode energies `E_k`.
    pub fn energies(&self) -> Vec<f64> {
        (0..self.m).map(|k| dispersion(k, self.m, self.hop).unwrap()).collect()
    }
}

/// Inverse temperature and chemical potential reproducing a density and a
/// mean energy per site.
pub fn solve_beta_mu(n_target: f64, e_target: f64, m: usize, hop: f64) -> Result<ThermalPoint> {
    check_ring(m, hop)?;
    if !(n_target > 0.0 && n_target.is_finite()) {
        return Err(Error::InvalidParameter(format!("density must be positive, got {n_target}")));
    }
    let (lo, hi) = (-hop * n_target, 0.0);
    if !(e_target > lo && e_target < hi) {
        return Err(Error::EnergyOutOfRange { target: e_target, lo, hi });
    }
    // Ē decreases monotonically with log β at fixed density.
    let energy_at = |log_beta: f64| -> f64 {
        let beta = log_beta.exp();
        match solve_mu(beta, n_target, m, hop) {
            Ok(mu) => {
                let x = (-hop - mu).ln();
                moments_x(beta, x, m, hop).1
            }
            Err(_) => f64::NAN,
        }
    };
    let log_beta = decreasing_root(
        |y| {
            let e = energy_at(y.clamp(-60.0, 60.0));
            if e.is_nan() {
                f64::NAN
            } else {
                (e - e_target) / n_target
            }
        },
        0.0,
        PAIR_TOL,
        "inverse temperature",
    )?;
    let beta = log_beta.exp();
    let mu = solve_mu(beta, n_target, m, hop)?;
    ThermalPoint::from_beta_mu(beta, mu, m, hop)
}

/// Initial condition of one region of a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RegionState {
    Thermal { point: ThermalPoint, shifted: bool },
    Empty,
}

/// A set of trajectories sampled from the quantum ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub states: Vec<FieldState>,
    pub seed: u64,
    /// Generating state of every region.
    pub meta: Vec<(Region, RegionState)>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.states.first().map_or(0, FieldState::len)
    }

    /// Writes `site,trajectory,re,im` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "site,trajectory,re,im")?;
        for (t, s) in self.states.iter().enumerate() {
            for (l, a) in s.amplitudes().iter().enumerate() {
                writeln!(out, "{l},{t},{},{}", a.re, a.im)?;
            }
        }
        Ok(())
    }

    /// Reads the format written by [`Ensemble::write_csv`]; metadata is not
    /// part of the dump and comes back empty.
    pub fn read_csv<R: BufRead>(input: R, seed: u64) -> std::result::Result<Ensemble, String> {
        let mut rows: Vec<(usize, usize, Complex64)> = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(format!("line {}: expected 4 fields", i + 1));
            }
            let p = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", i + 1));
            let site = f[0].trim().parse::<usize>().map_err(|e| format!("line {}: {e}", i + 1))?;
            let traj = f[1].trim().parse::<usize>().map_err(|e| format!("line {}: {e}", i + 1))?;
            rows.push((site, traj, Complex64::new(p(f[2])?, p(f[3])?)));
        }
        let n_sites = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let n_traj = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        if rows.len() != n_sites * n_traj {
            return Err(format!("expected {} rows, found {}", n_sites * n_traj, rows.len()));
        }
        let mut states = vec![FieldState::zeros(n_sites); n_traj];
        for (s, t, a) in rows {
            states[t].0[s] = a;
        }
        Ok(Ensemble { states, seed, meta: Vec::new() })
    }
}

/// Samples `n_traj` ring states `a_ℓ = M^{-1/2} Σ_k e^{i2πkℓ/M} √n_k e^{iφ_k}`
/// with independent uniform phases `φ_k`.
pub fn sample_quantum_ensemble(point: &ThermalPoint, n_traj: usize, seed: u64, shifted: bool) -> Ensemble {
    let occ = point.occupations(shifted);
    let tw = fourier::twiddles(point.m);
    let states = sample_with(n_traj, Execution::Auto, point.m, |traj, state| {
        let mut rng = rng::stream(seed, Purpose::Phases, traj as u64);
        fill_ring(&mut rng, &occ, &tw, state);
    });
    Ensemble { states, seed, meta: vec![(Region::Whole, RegionState::Thermal { point: *point, shifted })] }
}

fn fill_ring<R: Rng>(rng: &mut R, occ: &[f64], tw: &[Complex64], out: &mut [Complex64]) {
    let b: Vec<Complex64> = occ
        .iter()
        .map(|&n| Complex64::from_polar(n.sqrt(), 2.0 * PI * rng.random::<f64>()))
        .collect();
    fourier::from_bloch_with(tw, &b, out);
}

fn sample_with<F>(n_traj: usize, exec: Execution, n_sites: usize, fill: F) -> Vec<FieldState>
where
    F: Fn(usize, &mut [Complex64]) + Sync + Send,
{
    map_chunks(n_traj, exec, |range| {
        range
            .map(|traj| {
                let mut s = FieldState::zeros(n_sites);
                fill(traj, &mut s.0);
                s
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Samples an ensemble for a whole lattice. Every ring region needs a state;
/// a chain region may only be empty. Ring phases are drawn from each
/// trajectory's stream in the order the regions are given.
pub fn sample_lattice_ensemble(
    graph: &SiteGraph,
    inits: &[(Region, RegionState)],
    n_traj: usize,
    seed: u64,
) -> Result<Ensemble> {
    if n_traj == 0 {
        return Err(Error::InvalidParameter("need at least one trajectory".into()));
    }
    let mut plan = Vec::new();
    for (region, _) in graph.regions() {
        if !inits.iter().any(|(r, _)| *r == region) {
            return Err(Error::InvalidParameter(format!("no initial state for region {}", region.label())));
        }
    }
    for &(region, state) in inits {
        let sites = graph.region_sites(region)?;
        match state {
            RegionState::Empty => {}
            RegionState::Thermal { point, shifted } => {
                if !graph.is_ring(region) {
                    return Err(Error::NotARing(region));
                }
                if point.m != sites.len() {
                    return Err(Error::InvalidParameter(format!(
                        "thermal state for {} has m = {} but the ring has {} sites",
                        region.label(),
                        point.m,
                        sites.len()
                    )));
                }
                plan.push((sites, point.occupations(shifted), fourier::twiddles(point.m)));
            }
        }
    }
    let n = graph.n_sites();
    let states = sample_with(n_traj, Execution::Auto, n, |traj, state| {
        let mut rng = rng::stream(seed, Purpose::Phases, traj as u64);
        for (sites, occ, tw) in &plan {
            let mut ring = vec![Complex64::new(0.0, 0.0); sites.len()];
            fill_ring(&mut rng, occ, tw, &mut ring);
            for (&s, a) in sites.iter().zip(ring) {
                state[s] = a;
            }
        }
    });
    Ok(Ensemble { states, seed, meta: inits.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::to_bloch;

    #[test]
    fn dispersion_values() {
        assert_eq!(dispersion(0, 20, 1.0).unwrap(), -1.0);
        assert!((dispersion(10, 20, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let s: f64 = (0..20).map(|k| dispersion(k, 20, 1.0).unwrap()).sum();
        assert!(s.abs() < 1e-14);
        assert_eq!(dispersion(20, 20, 1.0), Err(Error::ModeIndex { k: 20, m: 20 }));
    }

    #[test]
    fn occupation_values() {
        let n = be_occupation(2f64.ln(), 1.0, 0.0).unwrap();
        assert!((n - 1.0).abs() < 1e-15);
        assert_eq!(be_occupation(0.0, 1.0, f64::NEG_INFINITY).unwrap(), 0.0);
        // 1/(e^0.14 − 1) from an mpmath evaluation at 30 digits.
        let n = be_occupation(-1.0, 2.0, -1.07).unwrap();
        assert!((n - 6.654520000190345).abs() < 1e-12);
        assert!(matches!(be_occupation(-1.0, 2.0, -1.0), Err(Error::DivergentOccupation { .. })));
        assert!(be_occupation(-1.0, 2.0, -0.5).is_err());
    }

    #[test]
    fn moments_limits_and_errors() {
        assert_eq!(be_moments(2.0, f64::NEG_INFINITY, 20, 1.0).unwrap(), (0.0, 0.0));
        let (n, e) = be_moments(2.0, -60.0, 20, 1.0).unwrap();
        assert!(n < 1e-40 && e.abs() < 1e-40);
        assert!(be_moments(2.0, -1.0, 20, 1.0).is_err());
        assert!(be_moments(-1.0, -2.0, 20, 1.0).is_err());
    }

    #[test]
    fn solve_mu_hits_density() {
        for (beta, n, m) in [(2.0, 1.0, 20), (0.2, 1.0, 20), (0.2, 0.5, 40), (5.0, 3.0, 10), (0.05, 0.01, 7)] {
            let mu = solve_mu(beta, n, m, 1.0).unwrap();
            assert!(mu < -1.0);
            let (nb, _) = be_moments(beta, mu, m, 1.0).unwrap();
            assert!((nb - n).abs() < 1e-10, "{beta} {n} {m}: {nb}");
        }
    }

    #[test]
    fn solve_beta_mu_round_trip() {
        let p = solve_beta_mu(1.0, -0.533, 20, 1.0).unwrap();
        let (n, e) = be_moments(p.beta, p.mu, 20, 1.0).unwrap();
        assert!((n - 1.0).abs() < 1e-8 && (e + 0.533).abs() < 1e-8);
        let err = solve_beta_mu(1.0, -1.2, 20, 1.0).unwrap_err();
        assert_eq!(err, Error::EnergyOutOfRange { target: -1.2, lo: -1.0, hi: 0.0 });
        assert!(solve_beta_mu(1.0, 0.1, 20, 1.0).is_err());
    }

    #[test]
    fn shifted_occupations_peak_at_band_top() {
        let p = ThermalPoint::from_beta_density(2.0, 1.0, 20, 1.0).unwrap();
        let plain = p.occupations(false);
        let shifted = p.occupations(true);
        assert_eq!(shifted[10], plain[0]);
        assert_eq!(shifted[0], plain[10]);
        let imax = shifted.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(imax, 10);
    }

    #[test]
    fn sampled_states_have_fixed_mode_moduli() {
        let p = ThermalPoint::from_beta_density(2.0, 1.0, 16, 1.0).unwrap();
        let occ = p.occupations(false);
        let total: f64 = occ.iter().sum();
        let ens = sample_quantum_ensemble(&p, 40, 3, false);
        assert_eq!(ens.len(), 40);
        for s in &ens.states {
            assert!((s.norm_sqr() - total).abs() < 1e-12 * total);
            let b = to_bloch(s.amplitudes());
            for (bk, nk) in b.iter().zip(&occ) {
                assert!((bk.norm_sqr() - nk).abs() < 1e-12 * total);
            }
        }
        // Same seed, same ensemble.
        assert_eq!(ens, sample_quantum_ensemble(&p, 40, 3, false));
    }

    #[test]
    fn csv_round_trip() {
        let p = ThermalPoint::from_beta_density(0.2, 1.0, 5, 1.0).unwrap();
        let ens = sample_quantum_ensemble(&p, 3, 11, false);
        let mut buf = Vec::new();
        ens.write_csv(&mut buf).unwrap();
        let back = Ensemble::read_csv(buf.as_slice(), 11).unwrap();
        assert_eq!(back.states, ens.states);
        assert!(Ensemble::read_csv("site,trajectory,re,im\n0,0,1\n".as_bytes(), 0).is_err());
    }
}
