// Unitary discrete Fourier transform between Wannier (site) and Bloch
// (quasimomentum) amplitudes of an M-site ring:
//   b_k = M^{-1/2} Σ_ℓ e^{-i 2π k ℓ / M} a_ℓ,   a_ℓ = M^{-1/2} Σ_k e^{i 2π k ℓ / M} b_k.
// A plane wave e^{iκℓ} with κ = 2πk/M is carried by mode k alone.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Table of e^{-i 2π j / M}, j = 0..M.
pub(crate) fn twiddles(m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / m as f64))
        .collect()
}

pub(crate) fn to_bloch_with(tw: &[Complex64], a: &[Complex64], out: &mut [Complex64]) {
    let m = a.len();
    let norm = 1.0 / (m as f64).sqrt();
    for (k, bk) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, al) in a.iter().enumerate() {
            acc += tw[(k * l) % m] * al;
        }
        *bk = acc * norm;
    }
}

pub(crate) fn from_bloch_with(tw: &[Complex64], b: &[Complex64], out: &mut [Complex64]) {
    let m = b.len();
    let norm = 1.0 / (m as f64).sqrt();
    for (l, al) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, bk) in b.iter().enumerate() {
            acc += tw[(k * l) % m].conj() * bk;
        }
        *al = acc * norm;
    }
}

#[cfg(test)]
pub(crate) fn to_bloch(a: &[Complex64]) -> Vec<Complex64> {
    let tw = twiddles(a.len());
    let mut out = vec![Complex64::new(0.0, 0.0); a.len()];
    to_bloch_with(&tw, a, &mut out);
    out
}

/// Matrix F with b = F a.
pub(crate) fn bloch_matrix(m: usize) -> DMatrix<Complex64> {
    let tw = twiddles(m);
    let norm = 1.0 / (m as f64).sqrt();
    DMatrix::from_fn(m, m, |k, l| tw[(k * l) % m] * norm)
}
