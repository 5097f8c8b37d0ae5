//! Maximal Lyapunov exponents from tangent-space propagation.
//!
//! A tangent vector is carried along each trajectory with the exact Jacobian
//! of every integrator substep (Benettin's method). Every `tau_r` the tangent
//! is renormalized to unit length and the logarithm of its length is
//! accumulated.

use crate::dynamics::{Batch, Propagator};
use crate::error::{Error, Result};
use crate::exec::{map_chunks, Execution};
use crate::lattice::{classical_energy, hopping_matrix, Couplings, FieldState, Layout, SiteGraph};
use crate::rng::{stream, Purpose};
use crate::stats::Estimate;
use crate::thermal::{sample_quantum_ensemble, ThermalPoint};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// Tangent derivative `δ̇ = −i[h δ + g(2|a|² δ + a² δ*)]`.
pub fn tangent_rhs(graph: &SiteGraph, state: &FieldState, tangent: &FieldState) -> Result<FieldState> {
    let n = graph.n_sites();
    for len in [state.len(), tangent.len()] {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, got: len });
        }
    }
    let h = hopping_matrix(graph);
    let (a, d) = (state.amplitudes(), tangent.amplitudes());
    let out = (0..n)
        .map(|l| {
            let hop: Complex64 = (0..n).map(|k| h[(l, k)] * d[k]).sum();
            let g = graph.g_site()[l];
            let nl = g * (2.0 * a[l].norm_sqr() * d[l] + a[l] * a[l] * d[l].conj());
            Complex64::new(0.0, -1.0) * (hop + nl)
        })
        .collect();
    Ok(FieldState(out))
}

/// Evolves a state together with a tangent vector for `steps` steps.
pub fn evolve_tangent(
    prop: &Propagator,
    state: &FieldState,
    tangent: &FieldState,
    steps: usize,
) -> (FieldState, FieldState) {
    let mut batch = Batch::from_states(&[state.clone(), tangent.clone()]);
    advance_pairs(prop, &mut batch, steps);
    (batch.column_state(0), batch.column_state(1))
}

fn advance_pairs(prop: &Propagator, batch: &mut Batch, steps: usize) {
    if steps == 0 {
        return;
    }
    let mut scratch = batch.scratch();
    let dt = prop.dt();
    prop.nonlinear_tangent(batch, 0.5 * dt);
    for s in 0..steps {
        prop.linear(batch, &mut scratch);
        let tau = if s + 1 == steps { 0.5 * dt } else { dt };
        prop.nonlinear_tangent(batch, tau);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovOptions {
    /// Total integration time `T`.
    pub t_total: f64,
    /// Renormalization interval.
    pub tau_r: f64,
    pub dt: f64,
    /// Number of evenly spaced points in the running estimate.
    pub checkpoints: usize,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions { t_total: 2000.0, tau_r: 1.0, dt: crate::dynamics::DEFAULT_DT, checkpoints: 20 }
    }
}

impl LyapunovOptions {
    fn intervals(&self) -> Result<(usize, usize)> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if !(ok(self.t_total) && ok(self.tau_r) && ok(self.dt)) {
            return Err(Error::InvalidParameter("Lyapunov times must be positive".into()));
        }
        let per = (self.tau_r / self.dt).round().max(1.0) as usize;
        let count = (self.t_total / (per as f64 * self.dt)).round() as usize;
        if count == 0 {
            return Err(Error::InvalidParameter("total time shorter than the renormalization interval".into()));
        }
        Ok((per, count))
    }
}

/// Exponent of one trajectory with its running estimate `(t, λ(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRun {
    pub lambda: f64,
    pub running: Vec<(f64, f64)>,
}

/// Random unit tangent with no component along the global phase direction `i a`.
fn initial_tangent(state: &FieldState, seed: u64, index: u64) -> FieldState {
    let mut rng = stream(seed, Purpose::Tangent, index);
    let mut d: Vec<Complex64> = (0..state.len())
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let a = state.amplitudes();
    let norm_a = state.norm_sqr();
    if norm_a > 0.0 {
        let ia: Vec<Complex64> = a.iter().map(|z| Complex64::new(-z.im, z.re)).collect();
        let overlap: f64 = ia.iter().zip(&d).map(|(u, v)| (u.conj() * v).re).sum::<f64>() / norm_a;
        for (x, u) in d.iter_mut().zip(&ia) {
            *x -= overlap * u;
        }
    }
    let norm = d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    FieldState(d.into_iter().map(|z| z / norm).collect())
}

/// Benettin estimate for a block of trajectories sharing one propagator;
/// `first` is the index of the first trajectory (its tangent stream).
fn benettin_block(
    prop: &Propagator,
    states: &[FieldState],
    first: usize,
    opts: &LyapunovOptions,
    seed: u64,
) -> Result<Vec<LyapunovRun>> {
    let (per, count) = opts.intervals()?;
    let mut cols = Vec::with_capacity(2 * states.len());
    for (i, s) in states.iter().enumerate() {
        cols.push(s.clone());
        cols.push(initial_tangent(s, seed, (first + i) as u64));
    }
    let mut batch = Batch::from_states(&cols);
    let mut sums = vec![0.0; states.len()];
    let mut running = vec![Vec::new(); states.len()];
    let every = (count / opts.checkpoints.max(1)).max(1);
    let interval = per as f64 * prop.dt();
    for step in 1..=count {
        advance_pairs(prop, &mut batch, per);
        for (i, sum) in sums.iter_mut().enumerate() {
            let tangent = batch.column_mut(2 * i + 1);
            let norm = tangent.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::NoConvergence(format!("tangent norm {norm} at t = {}", step as f64 * interval)));
            }
            *sum += norm.ln();
            tangent.iter_mut().for_each(|x| *x /= norm);
            if step % every == 0 || step == count {
                let t = step as f64 * interval;
                running[i].push((t, *sum / t));
            }
        }
    }
    let t = count as f64 * interval;
    Ok(sums.into_iter().zip(running).map(|(s, r)| LyapunovRun { lambda: s / t, running: r }).collect())
}

/// Maximal Lyapunov exponent of the trajectory starting at `init`.
pub fn max_lyapunov(graph: &SiteGraph, init: &FieldState, opts: &LyapunovOptions, seed: u64) -> Result<LyapunovRun> {
    if init.len() != graph.n_sites() {
        return Err(Error::LengthMismatch { expected: graph.n_sites(), got: init.len() });
    }
    let prop = Propagator::new(graph, opts.dt)?;
    Ok(benettin_block(&prop, std::slice::from_ref(init), 0, opts, seed)?.remove(0))
}

/// Exponents of every trajectory; trajectory `i` uses tangent stream `i`.
pub fn ensemble_lyapunov(
    graph: &SiteGraph,
    states: &[FieldState],
    opts: &LyapunovOptions,
    seed: u64,
    exec: Execution,
) -> Result<Vec<LyapunovRun>> {
    if let Some(s) = states.iter().find(|s| s.len() != graph.n_sites()) {
        return Err(Error::LengthMismatch { expected: graph.n_sites(), got: s.len() });
    }
    let prop = Propagator::new(graph, opts.dt)?;
    let parts = map_chunks(states.len(), exec, |range| {
        benettin_block(&prop, &states[range.clone()], range.start, opts, seed)
    });
    let mut out = Vec::with_capacity(states.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Modulation-instability increment `|q| √(2g/J − q²)` of sidebands `π ± q`,
/// zero where the radicand is negative.
pub fn mi_increment(q: f64, g: f64, hop: f64) -> f64 {
    let r = 2.0 * g / hop - q * q;
    if r <= 0.0 {
        0.0
    } else {
        q.abs() * r.sqrt()
    }
}

/// Amplitude growth rate of sidebands `π ± q` of a unit-modulus plane wave
/// obtained by linearizing the equation of motion with hopping `J/2` per
/// bond: `√(ε(2g − ε))`, `ε = J(1 − cos q)`.
pub fn bogoliubov_increment(q: f64, g: f64, hop: f64) -> f64 {
    let eps = hop * (1.0 - q.cos());
    let r = eps * (2.0 * g - eps);
    if r <= 0.0 {
        0.0
    } else {
        r.sqrt()
    }
}

/// Exact plane-wave solution `a_ℓ(t) = exp[i(κℓ + (J cos κ − g) t)]` on an
/// `m`-site ring.
pub fn plane_wave_state(kappa: f64, m: usize, t: f64, g: f64, hop: f64) -> Result<FieldState> {
    let k = kappa * m as f64 / (2.0 * PI);
    if m == 0 || (k - k.round()).abs() > 1e-9 {
        return Err(Error::IncommensurateMomentum { kappa, m });
    }
    let phase = (hop * kappa.cos() - g) * t;
    Ok(FieldState((0..m).map(|l| Complex64::from_polar(1.0, kappa * l as f64 + phase)).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    Beta(Vec<f64>),
    G(Vec<f64>),
    M(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub m: usize,
    pub g: f64,
    pub beta: f64,
    pub n_bar: f64,
    pub hop: f64,
    pub shifted: bool,
    pub n_samples: usize,
    pub options: LyapunovOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// Kinetic energy per site of the sampled Bose-Einstein state.
    pub e_kin: f64,
    /// Ensemble mean of the total energy per site.
    pub e_total: f64,
    pub lambda: Estimate,
    pub n_samples: usize,
}

pub fn lyapunov_sweep(config: &SweepConfig, exec: Execution) -> Result<Vec<SweepRow>> {
    let points: Vec<(f64, usize, f64, f64)> = match &config.axis {
        SweepAxis::Beta(v) => v.iter().map(|&b| (b, config.m, config.g, b)).collect(),
        SweepAxis::G(v) => v.iter().map(|&g| (g, config.m, g, config.beta)).collect(),
        SweepAxis::M(v) => v.iter().map(|&m| (m as f64, m, config.g, config.beta)).collect(),
    };
    let mut rows = Vec::with_capacity(points.len());
    for (value, m, g, beta) in points {
        let graph = Layout::Ring { m }.build(&Couplings::uniform(config.hop, g))?;
        let point = ThermalPoint::from_beta_density(beta, config.n_bar, m, config.hop)?;
        let ens = sample_quantum_ensemble(&point, config.n_samples, config.seed, config.shifted);
        let e_total = ens
            .states
            .iter()
            .map(|s| classical_energy(&graph, s).map(|e| e.total / m as f64))
            .collect::<Result<Vec<_>>>()?;
        let runs = ensemble_lyapunov(&graph, &ens.states, &config.options, config.seed, exec)?;
        let lambdas: Vec<f64> = runs.iter().map(|r| r.lambda).collect();
        let occ = point.occupations(config.shifted);
        let e_kin = point.energies().iter().zip(&occ).map(|(e, n)| e * n).sum::<f64>() / m as f64;
        rows.push(SweepRow {
            value,
            e_kin,
            e_total: Estimate::from_samples(&e_total).mean,
            lambda: Estimate::from_samples(&lambdas),
            n_samples: lambdas.len(),
        });
    }
    Ok(rows)
}

/// CSV with columns `value,E_K,E_total,lambda,stderr,n_samples`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "value,E_K,E_total,lambda,stderr,n_samples")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.value, r.e_kin, r.e_total, r.lambda.mean, r.lambda.stderr, r.n_samples)?;
    }
    Ok(())
}
