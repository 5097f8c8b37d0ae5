//! Ensemble averages over trajectory snapshots.
//!
//! Every averaged quantity carries its Monte-Carlo standard error. Sums over
//! trajectories are taken chunk by chunk and combined pairwise in a fixed
//! order, so results do not depend on the number of workers.

use crate::error::{Error, Result};
use crate::exec::{map_chunks, tree_reduce, Execution};
use crate::fourier;
use crate::lattice::{classical_energy, Bond, FieldState, Region, SiteGraph};
use crate::stats::{fit_line, Estimate};
use crate::thermal::{solve_beta_mu, ThermalPoint};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Wannier,
    Bloch,
}

/// Single-particle density matrix `ρ_{ij} = ⟨a_i* a_j⟩` of a region.
#[derive(Debug, Clone, PartialEq)]
pub struct Spdm {
    pub region: Region,
    pub basis: Basis,
    pub time: f64,
    pub n_traj: usize,
    /// Whether the region is a ring (so the Bloch basis exists).
    pub ring: bool,
    pub matrix: DMatrix<Complex64>,
    /// Element-wise standard error of the complex mean; absent after a
    /// change of basis applied to the averaged matrix.
    pub stderr: Option<DMatrix<f64>>,
}

impl Spdm {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Real part of the trace (the region's mean particle number).
    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    /// Largest `|ρ − ρ†|` element.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest off-diagonal `|ρ_ij| / σ_ij`.
    pub fn max_offdiag_z(&self) -> Option<f64> {
        let se = self.stderr.as_ref()?;
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j && se[(i, j)] > 0.0 {
                    worst = worst.max(self.matrix[(i, j)].norm() / se[(i, j)]);
                }
            }
        }
        Some(worst)
    }

    /// Rows `row,col,re,im[,stderr]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,re,im,stderr")?;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let z = self.matrix[(i, j)];
                match &self.stderr {
                    Some(se) => writeln!(out, "{i},{j},{},{},{}", z.re, z.im, se[(i, j)])?,
                    None => writeln!(out, "{i},{j},{},{},", z.re, z.im)?,
                }
            }
        }
        Ok(())
    }
}

/// Mean and error of `x_t = conj(v_t[i]) v_t[j]` over per-trajectory
/// vectors produced by `vectors`.
fn outer_mean<F>(n_traj: usize, dim: usize, vectors: F) -> (DMatrix<Complex64>, DMatrix<f64>)
where
    F: Fn(usize) -> Vec<Complex64> + Sync + Send,
{
    let sums = map_chunks(n_traj, Execution::Auto, |range| {
        let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
        for t in range {
            let v = vectors(t);
            for i in 0..dim {
                let ci = v[i].conj();
                for j in 0..dim {
                    acc[(i, j)] += ci * v[j];
                }
            }
        }
        acc
    });
    let total = tree_reduce(sums, |a, b| a + b).unwrap_or_else(|| DMatrix::zeros(dim, dim));
    let mean = total / Complex64::new(n_traj.max(1) as f64, 0.0);
    let devs = map_chunks(n_traj, Execution::Auto, |range| {
        let mut acc = DMatrix::<f64>::zeros(dim, dim);
        for t in range {
            let v = vectors(t);
            for i in 0..dim {
                let ci = v[i].conj();
                for j in 0..dim {
                    acc[(i, j)] += (ci * v[j] - mean[(i, j)]).norm_sqr();
                }
            }
        }
        acc
    });
    let var = tree_reduce(devs, |a, b| a + b).unwrap_or_else(|| DMatrix::zeros(dim, dim));
    let stderr = if n_traj > 1 {
        var.map(|s| (s / ((n_traj * (n_traj - 1)) as f64)).sqrt())
    } else {
        DMatrix::zeros(dim, dim)
    };
    (mean, stderr)
}

fn check_states(states: &[FieldState], graph: &SiteGraph) -> Result<()> {
    match states.iter().find(|s| s.len() != graph.n_sites()) {
        Some(s) => Err(Error::LengthMismatch { expected: graph.n_sites(), got: s.len() }),
        None => Ok(()),
    }
}

/// Site-basis SPDM of `region`.
pub fn spdm(states: &[FieldState], graph: &SiteGraph, region: Region, time: f64) -> Result<Spdm> {
    check_states(states, graph)?;
    let sites = graph.region_sites(region)?;
    let (matrix, stderr) = outer_mean(states.len(), sites.len(), |t| {
        sites.iter().map(|&s| states[t].0[s]).collect()
    });
    Ok(Spdm {
        region,
        basis: Basis::Wannier,
        time,
        n_traj: states.len(),
        ring: graph.is_ring(region),
        matrix,
        stderr: Some(stderr),
    })
}

/// Bloch-basis SPDM of a ring region, averaged from per-trajectory Bloch
/// amplitudes so that standard errors are available.
pub fn spdm_bloch(states: &[FieldState], graph: &SiteGraph, region: Region, time: f64) -> Result<Spdm> {
    check_states(states, graph)?;
    let sites = graph.ring_sites(region)?;
    let tw = fourier::twiddles(sites.len());
    let (matrix, stderr) = outer_mean(states.len(), sites.len(), |t| {
        let a: Vec<Complex64> = sites.iter().map(|&s| states[t].0[s]).collect();
        let mut b = vec![Complex64::new(0.0, 0.0); a.len()];
        fourier::to_bloch_with(&tw, &a, &mut b);
        b
    });
    Ok(Spdm {
        region,
        basis: Basis::Bloch,
        time,
        n_traj: states.len(),
        ring: true,
        matrix,
        stderr: Some(stderr),
    })
}

/// Conjugates a ring SPDM into the Bloch basis: `ρ_B = F̄ ρ Fᵀ` with
/// `b = F a`, which is what averaging `b_k* b_k'` gives.
pub fn to_bloch(spdm: &Spdm) -> Result<Spdm> {
    if !spdm.ring {
        return Err(Error::NotARing(spdm.region));
    }
    if spdm.basis == Basis::Bloch {
        return Ok(spdm.clone());
    }
    let f = fourier::bloch_matrix(spdm.dim());
    let matrix = f.map(|z| z.conj()) * &spdm.matrix * f.transpose();
    Ok(Spdm { basis: Basis::Bloch, matrix, stderr: None, ..spdm.clone() })
}

/// Site populations and per-region particle numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub sites: Vec<Estimate>,
    pub regions: Vec<(Region, Estimate)>,
    /// Ensemble mean of the total norm.
    pub total: f64,
}

impl Populations {
    pub fn region(&self, region: Region) -> Option<Estimate> {
        self.regions.iter().find(|(r, _)| *r == region).map(|(_, e)| *e)
    }
}

/// Estimates of `values(t)` (one vector per trajectory) component-wise.
fn estimate_columns<F>(n_traj: usize, dim: usize, values: F) -> Vec<Estimate>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let rows: Vec<Vec<f64>> = map_chunks(n_traj, Execution::Auto, |range| range.map(&values).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect();
    (0..dim)
        .map(|d| Estimate::from_samples(&rows.iter().map(|r| r[d]).collect::<Vec<_>>()))
        .collect()
}

pub fn populations_and_counts(states: &[FieldState], graph: &SiteGraph) -> Result<Populations> {
    check_states(states, graph)?;
    let regions: Vec<(Region, Vec<usize>)> = graph.regions().map(|(r, s)| (r, s.to_vec())).collect();
    let n = graph.n_sites();
    let est = estimate_columns(states.len(), n + regions.len() + 1, |t| {
        let a = states[t].amplitudes();
        let mut v: Vec<f64> = a.iter().map(|z| z.norm_sqr()).collect();
        for (_, sites) in &regions {
            v.push(sites.iter().map(|&s| a[s].norm_sqr()).sum());
        }
        v.push(a.iter().map(|z| z.norm_sqr()).sum());
        v
    });
    Ok(Populations {
        sites: est[..n].to_vec(),
        regions: regions.iter().enumerate().map(|(i, (r, _))| (*r, est[n + i])).collect(),
        total: est[n + regions.len()].mean,
    })
}

/// Particle current from `bond.i` to `bond.j`, `hop ⟨Im(a_i* a_j)⟩`.
pub fn bond_current(states: &[FieldState], graph: &SiteGraph, bond: (usize, usize)) -> Result<Estimate> {
    check_states(states, graph)?;
    let b = graph.find_bond(bond.0, bond.1)?;
    Ok(current_of(states, b, bond.0))
}

fn current_of(states: &[FieldState], b: Bond, from: usize) -> Estimate {
    let (i, j) = if b.i == from { (b.i, b.j) } else { (b.j, b.i) };
    let samples: Vec<f64> = states.iter().map(|s| b.hop * (s.0[i].conj() * s.0[j]).im).collect();
    Estimate::from_samples(&samples)
}

/// One sample of the transport observables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportSample {
    pub t: f64,
    pub n_left: Estimate,
    pub n_right: Estimate,
    pub n_chain: Estimate,
    /// Current through the central bond of the junction path, left to right.
    pub current: Estimate,
    pub total: f64,
}

/// Time series of particle numbers and junction current of a two-ring
/// lattice.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransportRecord {
    pub ring_size: usize,
    pub samples: Vec<TransportSample>,
}

impl TransportRecord {
    pub fn new(ring_size: usize) -> TransportRecord {
        TransportRecord { ring_size, samples: Vec::new() }
    }

    pub fn push(&mut self, states: &[FieldState], graph: &SiteGraph, t: f64) -> Result<()> {
        self.samples.push(transport_sample(states, graph, t)?);
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// `ΔN = N_L − N_R`.
    pub fn delta_n(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.n_left.mean - s.n_right.mean).collect()
    }

    /// `z(t) = (2/M) ln(ΔN(t)/ΔN(0))`.
    pub fn z(&self) -> Vec<f64> {
        let dn = self.delta_n();
        let m = self.ring_size as f64;
        dn.iter().map(|d| 2.0 / m * (d / dn[0]).ln()).collect()
    }

    pub fn density_left(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.n_left.mean / self.ring_size as f64).collect()
    }

    pub fn density_right(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.n_right.mean / self.ring_size as f64).collect()
    }

    /// Largest relative deviation of `N_L + N_R + N_chain` from its initial value.
    pub fn conservation_error(&self) -> f64 {
        let sum = |s: &TransportSample| s.n_left.mean + s.n_right.mean + s.n_chain.mean;
        let Some(first) = self.samples.first() else { return 0.0 };
        let n0 = sum(first);
        self.samples.iter().map(|s| ((sum(s) - n0) / n0).abs()).fold(0.0, f64::max)
    }

    /// Fit window starting when `N_chain` first reaches 90% of its plateau
    /// (mean over the second half of the record) and ending at the last sample.
    pub fn auto_window(&self) -> Option<(f64, f64)> {
        let n = self.samples.len();
        if n < 4 {
            return None;
        }
        let tail = &self.samples[n / 2..];
        let plateau = tail.iter().map(|s| s.n_chain.mean).sum::<f64>() / tail.len() as f64;
        let start = self.samples.iter().find(|s| s.n_chain.mean >= 0.9 * plateau)?;
        Some((start.t, self.samples[n - 1].t))
    }

    fn window_indices(&self, window: (f64, f64)) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].t >= window.0 && self.samples[i].t <= window.1)
            .collect()
    }

    /// CSV with columns `t,N_L,N_R,N_chain,dN,z,j,j_err,n_L,n_R`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,N_L,N_R,N_chain,dN,z,j,j_err,n_L,n_R")?;
        let (dn, z) = (self.delta_n(), self.z());
        let (nl, nr) = (self.density_left(), self.density_right());
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.t, s.n_left.mean, s.n_right.mean, s.n_chain.mean, dn[i], z[i], s.current.mean,
                s.current.stderr, nl[i], nr[i]
            )?;
        }
        Ok(())
    }
}

pub fn transport_sample(states: &[FieldState], graph: &SiteGraph, t: f64) -> Result<TransportSample> {
    check_states(states, graph)?;
    let path = graph.junction_path();
    if path.is_empty() {
        return Err(Error::InvalidParameter("transport needs a two-ring lattice".into()));
    }
    let pops = populations_and_counts(states, graph)?;
    let central = path[path.len() / 2];
    Ok(TransportSample {
        t,
        n_left: pops.region(Region::LeftRing).unwrap_or_default(),
        n_right: pops.region(Region::RightRing).unwrap_or_default(),
        n_chain: pops.region(Region::Chain).unwrap_or_default(),
        current: current_of(states, central, central.i),
        total: pops.total,
    })
}

/// Exponential decay of the particle imbalance over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportFit {
    /// Decay rate `s` of `ΔN ≈ ΔN(0) e^{−st}`.
    pub decay_rate: f64,
    /// Slope of `z(t) = (2/M) ln(ΔN/ΔN(0))`, i.e. `−2s/M`.
    pub z_slope: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

pub fn transport_fit(record: &TransportRecord, window: (f64, f64)) -> Result<TransportFit> {
    let idx = record.window_indices(window);
    if idx.len() < 2 {
        return Err(Error::InvalidParameter(format!("fit window {window:?} holds fewer than two samples")));
    }
    let dn = record.delta_n();
    let dn0 = dn[0];
    let mut x = Vec::with_capacity(idx.len());
    let mut y = Vec::with_capacity(idx.len());
    for &i in &idx {
        if dn[i] <= 0.0 || dn0 <= 0.0 {
            return Err(Error::SignChange(record.samples[i].t));
        }
        x.push(record.samples[i].t);
        y.push((dn[i] / dn0).ln());
    }
    let line = fit_line(&x, &y).ok_or_else(|| Error::InvalidParameter("degenerate fit window".into()))?;
    let s = -line.slope;
    Ok(TransportFit {
        decay_rate: s,
        z_slope: 2.0 / record.ring_size as f64 * line.slope,
        r_squared: line.r_squared,
        window,
    })
}

/// Smaller root `Γ` of `κ(J² + Γ²) = J² Γ`.
pub fn relaxation_rate(kappa: f64, hop: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("current ratio must be positive, got {kappa}")));
    }
    if kappa > 0.5 * hop {
        return Err(Error::KappaOutOfRange { kappa, limit: 0.5 * hop });
    }
    let j2 = hop * hop;
    let disc = (j2 * j2 - 4.0 * kappa * kappa * j2).max(0.0).sqrt();
    Ok(2.0 * kappa * j2 / (j2 + disc))
}

/// Boundary relaxation rate inferred from the quasi-stationary current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// Window mean of `2 j / (n̄_L − n̄_R)`.
    pub kappa: f64,
    pub kappa_stderr: f64,
    /// Relaxation constant `Γ`.
    pub gamma: f64,
    /// Self-thermalization rate `ε²/Γ`.
    pub thermalization_rate: f64,
    pub epsilon: f64,
}

pub fn extract_gamma(
    record: &TransportRecord,
    hop: f64,
    epsilon: f64,
    window: (f64, f64),
) -> Result<GammaEstimate> {
    let idx = record.window_indices(window);
    if idx.is_empty() {
        return Err(Error::InvalidParameter(format!("fit window {window:?} is empty")));
    }
    let (nl, nr) = (record.density_left(), record.density_right());
    let mut ratios = Vec::with_capacity(idx.len());
    for &i in &idx {
        let dn = nl[i] - nr[i];
        if dn <= 0.0 {
            return Err(Error::SignChange(record.samples[i].t));
        }
        ratios.push(2.0 * record.samples[i].current.mean / dn);
    }
    // Samples are time-correlated; the error below is a lower bound.
    let kappa = Estimate::from_samples(&ratios);
    let gamma = relaxation_rate(kappa.mean, hop)?;
    Ok(GammaEstimate {
        kappa: kappa.mean,
        kappa_stderr: kappa.stderr,
        gamma,
        thermalization_rate: epsilon * epsilon / gamma,
        epsilon,
    })
}

/// Bose-Einstein state matched to the density and kinetic energy of a ring's
/// Bloch-basis SPDM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refit {
    pub point: ThermalPoint,
    /// `max_k |ρ_kk − n_k(β', μ')|`.
    pub max_dev: f64,
    pub diagonal: Vec<f64>,
}

/// Largest `|ρ_kk − n_k|` against a Bose-Einstein state.
pub fn max_deviation(diagonal: &[f64], point: &ThermalPoint) -> f64 {
    diagonal
        .iter()
        .zip(point.occupations(false))
        .map(|(r, n)| (r - n).abs())
        .fold(0.0, f64::max)
}

pub fn be_refit(states: &[FieldState], graph: &SiteGraph, region: Region) -> Result<Refit> {
    let rho = spdm_bloch(states, graph, region, 0.0)?;
    let diagonal = rho.diagonal();
    let m = diagonal.len();
    let hop = graph.hop();
    let n_bar = diagonal.iter().sum::<f64>() / m as f64;
    let e_kin = diagonal
        .iter()
        .enumerate()
        .map(|(k, r)| crate::thermal::dispersion(k, m, hop).map(|e| e * r))
        .sum::<Result<f64>>()?
        / m as f64;
    let point = solve_beta_mu(n_bar, e_kin, m, hop)?;
    let max_dev = max_deviation(&diagonal, &point);
    Ok(Refit { point, max_dev, diagonal })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyComponent {
    Total,
    Kinetic,
    Potential,
}

/// Per-trajectory energy per site.
pub fn energies_per_site(states: &[FieldState], graph: &SiteGraph, component: EnergyComponent) -> Result<Vec<f64>> {
    check_states(states, graph)?;
    let n = graph.n_sites() as f64;
    states
        .iter()
        .map(|s| {
            let e = classical_energy(graph, s)?;
            Ok(match component {
                EnergyComponent::Total => e.total,
                EnergyComponent::Kinetic => e.kinetic,
                EnergyComponent::Potential => e.potential,
            } / n)
        })
        .collect()
}

/// Counts per bin; `edges` has one more entry than `counts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: Estimate,
}

impl Histogram {
    /// Equal-width bins over `range`, or over the data range when `None`.
    /// Values outside the range are not counted.
    pub fn from_values(values: &[f64], bins: usize, range: Option<(f64, f64)>) -> Histogram {
        let bins = bins.max(1);
        let (mut lo, mut hi) = range.unwrap_or_else(|| {
            values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
        });
        if !(lo.is_finite() && hi.is_finite()) {
            (lo, hi) = (0.0, 1.0);
        }
        if hi <= lo {
            let pad = 0.5 * lo.abs().max(1e-12);
            (lo, hi) = (lo - pad, hi + pad);
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts, mean: Estimate::from_samples(values) }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{},{}", self.edges[i], self.edges[i + 1], c)?;
        }
        Ok(())
    }
}

pub fn energy_histogram(
    states: &[FieldState],
    graph: &SiteGraph,
    component: EnergyComponent,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Histogram> {
    let values = energies_per_site(states, graph, component)?;
    Ok(Histogram::from_values(&values, bins, range))
}
