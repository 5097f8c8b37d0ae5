//! Time evolution under `i ȧ_ℓ = Σ_ℓ' h_ℓℓ' a_ℓ' + g_ℓ |a_ℓ|² a_ℓ`.
//!
//! The integrator is second-order Strang splitting: half a nonlinear phase
//! rotation, the exact linear flow `exp(−i h dt)`, half a rotation. Both
//! substeps preserve the norm exactly, and the scheme is exact for `g = 0`
//! and for `J = 0`.
//!
//! Trajectories are propagated in batches. A batch stores each trajectory
//! as one column `[Re a, Im a]` of a `2n × w` matrix so that the linear step
//! for the whole batch is a single real matrix product with
//! `[[Re U, −Im U], [Im U, Re U]]`. Consecutive nonlinear half steps are
//! fused into full steps between sample times.

use crate::error::{Error, Result};
use crate::exec::{map_chunks, Execution};
use crate::lattice::{hopping_matrix, FieldState, SiteGraph};
use crate::thermal::Ensemble;
use crate::trig::cis_neg_m1;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Default time step in units of `1/J`.
pub const DEFAULT_DT: f64 = 0.01;

/// Time derivative `ȧ_ℓ = −i[(h a)_ℓ + g_ℓ |a_ℓ|² a_ℓ]`.
pub fn eom_rhs(graph: &SiteGraph, state: &FieldState) -> Result<FieldState> {
    if state.len() != graph.n_sites() {
        return Err(Error::LengthMismatch { expected: graph.n_sites(), got: state.len() });
    }
    let a = state.amplitudes();
    let mut out: Vec<Complex64> = a
        .iter()
        .zip(graph.g_site())
        .map(|(z, g)| g * z.norm_sqr() * z)
        .collect();
    for b in graph.bonds() {
        out[b.i] -= 0.5 * b.hop * a[b.j];
        out[b.j] -= 0.5 * b.hop * a[b.i];
    }
    let minus_i = Complex64::new(0.0, -1.0);
    Ok(FieldState(out.into_iter().map(|z| minus_i * z).collect()))
}

/// Precomputed one-step propagator for a fixed lattice and time step.
#[derive(Debug, Clone)]
pub struct Propagator {
    dt: f64,
    n: usize,
    /// Row-major `2n × 2n` real form of `exp(−i h dt) − 1`, applied as
    /// `a + (U − 1) a` so that rounding near one does not bias the norm.
    block: Vec<f64>,
    g_site: Vec<f64>,
}

impl Propagator {
    pub fn new(graph: &SiteGraph, dt: f64) -> Result<Propagator> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let n = graph.n_sites();
        let eig = SymmetricEigen::new(hopping_matrix(graph));
        let v = &eig.eigenvectors;
        let cos_m1 = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| -2.0 * (0.5 * e * dt).sin().powi(2)));
        let sin = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| (e * dt).sin()));
        let re = v * cos_m1 * v.transpose();
        let im = -(v * sin * v.transpose());
        let mut block = vec![0.0; 4 * n * n];
        let w = 2 * n;
        for r in 0..n {
            for c in 0..n {
                block[r * w + c] = re[(r, c)];
                block[r * w + n + c] = -im[(r, c)];
                block[(n + r) * w + c] = im[(r, c)];
                block[(n + r) * w + n + c] = re[(r, c)];
            }
        }
        Ok(Propagator { dt, n, block, g_site: graph.g_site().to_vec() })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    /// Complex one-step linear propagator `exp(−i h dt)`.
    pub fn linear_step(&self) -> DMatrix<Complex64> {
        let n = self.n;
        let w = 2 * n;
        let one = |r, c| if r == c { 1.0 } else { 0.0 };
        DMatrix::from_fn(n, n, |r, c| Complex64::new(one(r, c) + self.block[r * w + c], self.block[(n + r) * w + c]))
    }

    /// One unfused Strang step of a single state.
    pub fn strang_step(&self, state: &FieldState) -> FieldState {
        let mut batch = Batch::from_states(std::slice::from_ref(state));
        let mut scratch = batch.scratch();
        self.nonlinear(&mut batch, 0.5 * self.dt);
        self.linear(&mut batch, &mut scratch);
        self.nonlinear(&mut batch, 0.5 * self.dt);
        batch.column_state(0)
    }

    /// `steps` Strang steps of a single state (half steps fused).
    pub fn evolve_state(&self, state: &FieldState, steps: usize) -> FieldState {
        let mut batch = Batch::from_states(std::slice::from_ref(state));
        self.advance(&mut batch, steps);
        batch.column_state(0)
    }

    /// Advances every state by `steps` steps in place.
    pub fn advance_states(&self, states: &mut [FieldState], steps: usize, exec: Execution) {
        if steps == 0 || states.is_empty() {
            return;
        }
        let shared: &[FieldState] = states;
        let parts = map_chunks(shared.len(), exec, |range| {
            let mut batch = Batch::from_states(&shared[range]);
            self.advance(&mut batch, steps);
            batch
        });
        let mut offset = 0;
        for batch in parts {
            for c in 0..batch.width {
                batch.write_column(c, &mut states[offset + c]);
            }
            offset += batch.width;
        }
    }

    pub(crate) fn advance(&self, batch: &mut Batch, steps: usize) {
        if steps == 0 {
            return;
        }
        let mut scratch = batch.scratch();
        self.nonlinear(batch, 0.5 * self.dt);
        for s in 0..steps {
            self.linear(batch, &mut scratch);
            let tau = if s + 1 == steps { 0.5 * self.dt } else { self.dt };
            self.nonlinear(batch, tau);
        }
    }

    pub(crate) fn linear(&self, batch: &mut Batch, scratch: &mut Vec<f64>) {
        let m = 2 * self.n;
        debug_assert_eq!(batch.rows, m);
        scratch.copy_from_slice(&batch.data);
        // SAFETY: `block` is m×m row-major, `batch.data` and `scratch` are
        // m×width column-major and do not alias.
        unsafe {
            matrixmultiply::dgemm(
                m,
                m,
                batch.width,
                1.0,
                self.block.as_ptr(),
                m as isize,
                1,
                batch.data.as_ptr(),
                1,
                m as isize,
                1.0,
                scratch.as_mut_ptr(),
                1,
                m as isize,
            );
        }
        std::mem::swap(&mut batch.data, scratch);
    }

    /// On-site rotation `a → a e^{−i g |a|² τ}` of every column.
    pub(crate) fn nonlinear(&self, batch: &mut Batch, tau: f64) {
        let n = self.n;
        for col in batch.data.chunks_exact_mut(2 * n) {
            let (re, im) = col.split_at_mut(n);
            for ((x, y), g) in re.iter_mut().zip(im.iter_mut()).zip(&self.g_site) {
                if *g == 0.0 {
                    continue;
                }
                let (c1, s) = cis_neg_m1(g * (*x * *x + *y * *y) * tau);
                let (xr, yi) = (*x, *y);
                *x = xr + (xr * c1 - yi * s);
                *y = yi + (xr * s + yi * c1);
            }
        }
    }

    /// Rotation of (state, tangent) column pairs together with the exact
    /// Jacobian of the rotation applied to the tangent:
    /// `δ → e^{−iθ}(δ − 2i g τ Re(a* δ) a)`, `θ = g |a|² τ`.
    pub(crate) fn nonlinear_tangent(&self, batch: &mut Batch, tau: f64) {
        let n = self.n;
        for pair in batch.data.chunks_exact_mut(4 * n) {
            let (state, tangent) = pair.split_at_mut(2 * n);
            let (ar, ai) = state.split_at_mut(n);
            let (dr, di) = tangent.split_at_mut(n);
            for l in 0..n {
                let g = self.g_site[l];
                if g == 0.0 {
                    continue;
                }
                let (x, y) = (ar[l], ai[l]);
                let (c1, s) = cis_neg_m1(g * (x * x + y * y) * tau);
                let proj = x * dr[l] + y * di[l];
                let k = 2.0 * g * tau * proj;
                // δ − i k a
                let (ur, ui) = (dr[l] + k * y, di[l] - k * x);
                dr[l] = ur + (ur * c1 - ui * s);
                di[l] = ui + (ur * s + ui * c1);
                ar[l] = x + (x * c1 - y * s);
                ai[l] = y + (x * s + y * c1);
            }
        }
    }
}

/// Column-major `2n × width` block of trajectories.
#[derive(Debug, Clone)]
pub(crate) struct Batch {
    pub(crate) rows: usize,
    pub(crate) width: usize,
    pub(crate) data: Vec<f64>,
}

impl Batch {
    pub(crate) fn from_states(states: &[FieldState]) -> Batch {
        let n = states.first().map_or(0, FieldState::len);
        let mut data = Vec::with_capacity(2 * n * states.len());
        for s in states {
            data.extend(s.amplitudes().iter().map(|a| a.re));
            data.extend(s.amplitudes().iter().map(|a| a.im));
        }
        Batch { rows: 2 * n, width: states.len(), data }
    }

    pub(crate) fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub(crate) fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub(crate) fn column_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub(crate) fn column_state(&self, c: usize) -> FieldState {
        let mut s = FieldState::zeros(self.rows / 2);
        self.write_column(c, &mut s);
        s
    }

    pub(crate) fn write_column(&self, c: usize, out: &mut FieldState) {
        let n = self.rows / 2;
        let col = self.column(c);
        for (l, a) in out.0.iter_mut().enumerate() {
            *a = Complex64::new(col[l], col[n + l]);
        }
    }
}

/// Ensemble states at a series of sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshots {
    /// Actual sample times (integer multiples of `dt`).
    pub times: Vec<f64>,
    pub states: Vec<Vec<FieldState>>,
    /// Sample times that had to be moved onto the step grid.
    pub warnings: Vec<String>,
}

/// Maps requested sample times onto integer step counts.
pub fn schedule(times: &[f64], dt: f64) -> Result<(Vec<usize>, Vec<String>)> {
    let mut steps = Vec::with_capacity(times.len());
    let mut warnings = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for &t in times {
        if !(t >= 0.0 && t.is_finite()) || t <= prev {
            return Err(Error::InvalidParameter(format!(
                "sample times must be non-negative and strictly increasing (at t = {t})"
            )));
        }
        prev = t;
        let s = (t / dt).round();
        if (s * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            warnings.push(format!("sample time {t} snapped to {} (dt = {dt})", s * dt));
        }
        steps.push(s as usize);
    }
    Ok((steps, warnings))
}

/// Evolves every trajectory of `ens` and records the ensemble at `times`.
pub fn evolve_ensemble(ens: &Ensemble, prop: &Propagator, times: &[f64]) -> Result<Snapshots> {
    evolve_ensemble_with(ens, prop, times, Execution::Auto)
}

pub fn evolve_ensemble_with(
    ens: &Ensemble,
    prop: &Propagator,
    times: &[f64],
    exec: Execution,
) -> Result<Snapshots> {
    if ens.n_sites() != prop.n_sites() && !ens.is_empty() {
        return Err(Error::LengthMismatch { expected: prop.n_sites(), got: ens.n_sites() });
    }
    let (steps, warnings) = schedule(times, prop.dt())?;
    let mut current = ens.states.clone();
    let mut done = 0;
    let mut out = Snapshots { times: Vec::new(), states: Vec::new(), warnings };
    for s in steps {
        prop.advance_states(&mut current, s.saturating_sub(done), exec);
        done = done.max(s);
        out.times.push(done as f64 * prop.dt());
        out.states.push(current.clone());
    }
    Ok(out)
}
