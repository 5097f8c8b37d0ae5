//! Steady state of a non-interacting chain driven by two boundary
//! reservoirs.
//!
//! Site 0 exchanges particles with the left reservoir and site `L − 1`
//! with the right one. For the covariance `σ_ij = ⟨a_i† a_j⟩` the master
//! equation closes:
//!
//! `dσ/dt = i(hσ − σh) − (Dσ + σD) + P`,
//!
//! with `h` the hopping matrix (`−J/2` on each bond), `D = diag(Γ_i/2)` and
//! `P = diag(Γ_i n̄_i)` nonzero only on the boundary sites.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivenChainSpec {
    pub l: usize,
    pub hop: f64,
    pub gamma_left: f64,
    pub gamma_right: f64,
    pub n_left: f64,
    pub n_right: f64,
}

impl DrivenChainSpec {
    pub fn symmetric(l: usize, hop: f64, gamma: f64, n_left: f64, n_right: f64) -> DrivenChainSpec {
        DrivenChainSpec { l, hop, gamma_left: gamma, gamma_right: gamma, n_left, n_right }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::InvalidParameter("chain length must be at least 1".into()));
        }
        if !(self.hop > 0.0) {
            return Err(Error::InvalidParameter(format!("hopping must be positive, got {}", self.hop)));
        }
        if !(self.gamma_left > 0.0 && self.gamma_right > 0.0) {
            return Err(Error::InvalidParameter("relaxation rates must be positive".into()));
        }
        if !(self.n_left >= 0.0 && self.n_right >= 0.0) {
            return Err(Error::InvalidParameter("reservoir densities must be non-negative".into()));
        }
        Ok(())
    }
}

/// Stationary current `J²Γ/(J² + Γ²) (n̄_L − n̄_R)/2` for equal rates.
pub fn analytic_current(spec: &DrivenChainSpec) -> Result<f64> {
    spec.validate()?;
    if spec.gamma_left != spec.gamma_right {
        return Err(Error::UnequalRates(spec.gamma_left, spec.gamma_right));
    }
    let (j2, g) = (spec.hop * spec.hop, spec.gamma_left);
    Ok(j2 * g / (j2 + g * g) * 0.5 * (spec.n_left - spec.n_right))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub sigma: DMatrix<Complex64>,
    /// Current into the chain from the left reservoir for `L = 1`, the
    /// current through bond `(0, 1)` otherwise.
    pub current: f64,
    /// `J Im σ_{i,i+1}` for each internal bond.
    pub bond_currents: Vec<f64>,
}

impl SteadyState {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,re,im")?;
        for i in 0..self.sigma.nrows() {
            for j in 0..self.sigma.ncols() {
                let z = self.sigma[(i, j)];
                writeln!(out, "{i},{j},{},{}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

pub fn steady_covariance(spec: &DrivenChainSpec) -> Result<SteadyState> {
    spec.validate()?;
    let l = spec.l;
    let mut h = DMatrix::<f64>::zeros(l, l);
    for i in 0..l.saturating_sub(1) {
        h[(i, i + 1)] = -0.5 * spec.hop;
        h[(i + 1, i)] = -0.5 * spec.hop;
    }
    let mut damp = vec![0.0; l];
    let mut pump = vec![0.0; l];
    damp[0] += 0.5 * spec.gamma_left;
    pump[0] += spec.gamma_left * spec.n_left;
    damp[l - 1] += 0.5 * spec.gamma_right;
    pump[l - 1] += spec.gamma_right * spec.n_right;

    let idx = |i: usize, j: usize| i * l + j;
    let i_unit = Complex64::new(0.0, 1.0);
    let mut a = DMatrix::<Complex64>::zeros(l * l, l * l);
    let mut rhs = DVector::<Complex64>::zeros(l * l);
    for i in 0..l {
        for j in 0..l {
            let row = idx(i, j);
            for k in 0..l {
                a[(row, idx(k, j))] += i_unit * h[(i, k)];
                a[(row, idx(i, k))] -= i_unit * h[(k, j)];
            }
            a[(row, row)] -= Complex64::new(damp[i] + damp[j], 0.0);
            if i == j {
                rhs[row] = Complex64::new(-pump[i], 0.0);
            }
        }
    }
    let x = a.lu().solve(&rhs).ok_or(Error::Singular)?;
    let sigma = DMatrix::from_fn(l, l, |i, j| x[idx(i, j)]);
    let bond_currents: Vec<f64> = (0..l.saturating_sub(1)).map(|i| spec.hop * sigma[(i, i + 1)].im).collect();
    let current = match bond_currents.first() {
        Some(&j) => j,
        None => spec.gamma_left * (spec.n_left - sigma[(0, 0)].re),
    };
    Ok(SteadyState { sigma, current, bond_currents })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_examples() {
        let s = DrivenChainSpec::symmetric(3, 1.0, 1.0, 1.0, 0.5);
        assert!((analytic_current(&s).unwrap() - 0.5 * 0.25).abs() < 1e-15);
        assert_eq!(analytic_current(&DrivenChainSpec::symmetric(3, 1.0, 0.3, 0.7, 0.7)).unwrap(), 0.0);
        let small = DrivenChainSpec::symmetric(3, 1.0, 1e-6, 1.0, 0.0);
        assert!((analytic_current(&small).unwrap() - 0.5e-6).abs() < 1e-15);
        let uneq = DrivenChainSpec { gamma_right: 0.2, ..s };
        assert_eq!(analytic_current(&uneq), Err(Error::UnequalRates(1.0, 0.2)));
    }

    #[test]
    fn equilibrium_is_scaled_identity() {
        let st = steady_covariance(&DrivenChainSpec::symmetric(4, 1.0, 0.3, 0.8, 0.8)).unwrap();
        let expect = DMatrix::<Complex64>::identity(4, 4) * Complex64::new(0.8, 0.0);
        assert!((st.sigma - expect).norm() < 1e-12);
        assert!(st.current.abs() < 1e-12);
    }

    #[test]
    fn uniform_current_and_example() {
        let st = steady_covariance(&DrivenChainSpec::symmetric(3, 1.0, 0.07, 1.0, 0.5)).unwrap();
        // 0.07/(1 + 0.0049) · 0.25
        assert!((st.current - 0.07 / 1.0049 * 0.25).abs() < 1e-12);
        for j in &st.bond_currents {
            assert!((j - st.current).abs() < 1e-12);
        }
        assert!((&st.sigma - st.sigma.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(steady_covariance(&DrivenChainSpec::symmetric(0, 1.0, 0.1, 1.0, 0.0)).is_err());
        assert!(steady_covariance(&DrivenChainSpec::symmetric(2, 1.0, 0.0, 1.0, 0.0)).is_err());
        assert!(steady_covariance(&DrivenChainSpec::symmetric(2, 1.0, 0.1, -1.0, 0.0)).is_err());
    }
}
