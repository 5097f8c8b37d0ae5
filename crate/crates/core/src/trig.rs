// Fast unit phase factor for the small rotation angles of the nonlinear
// substep. Taylor series through θ¹³ is exact to rounding for |θ| < 0.25.
// `cis_neg_m1` returns `(cos θ − 1, −sin θ)` for rotations applied as
// `a + (e^{−iθ} − 1) a`.

const SMALL: f64 = 0.25;

#[inline(always)]
pub(crate) fn cis_neg(theta: f64) -> (f64, f64) {
    if theta.abs() < SMALL {
        let t2 = theta * theta;
        let c = 1.0
            + t2 * (-1.0 / 2.0
                + t2 * (1.0 / 24.0
                    + t2 * (-1.0 / 720.0
                        + t2 * (1.0 / 40320.0
                            + t2 * (-1.0 / 3628800.0 + t2 * (1.0 / 479001600.0))))));
        let s = theta
            * (1.0
                + t2 * (-1.0 / 6.0
                    + t2 * (1.0 / 120.0
                        + t2 * (-1.0 / 5040.0
                            + t2 * (1.0 / 362880.0
                                + t2 * (-1.0 / 39916800.0 + t2 * (1.0 / 6227020800.0)))))));
        (c, -s)
    } else {
        let (s, c) = theta.sin_cos();
        (c, -s)
    }
}

#[inline(always)]
pub(crate) fn cis_neg_m1(theta: f64) -> (f64, f64) {
    if theta.abs() < SMALL {
        let t2 = theta * theta;
        let cm1 = t2
            * (-1.0 / 2.0
                + t2 * (1.0 / 24.0
                    + t2 * (-1.0 / 720.0
                        + t2 * (1.0 / 40320.0 + t2 * (-1.0 / 3628800.0 + t2 * (1.0 / 479001600.0))))));
        (cm1, cis_neg(theta).1)
    } else {
        let h = (0.5 * theta).sin();
        (-2.0 * h * h, -theta.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_libm() {
        for i in -2000..=2000 {
            let theta = i as f64 * 1.7e-4;
            let (c, s) = cis_neg(theta);
            assert!((c - theta.cos()).abs() < 4e-16, "{theta}");
            assert!((s + theta.sin()).abs() < 4e-16, "{theta}");
            assert!((c * c + s * s - 1.0).abs() < 4e-16);
        }
        let (c, s) = cis_neg(2.0);
        assert_eq!((c, s), (2f64.cos(), -2f64.sin()));
        for i in -2000..=2000 {
            let theta = i as f64 * 3.1e-4;
            let (c1, s) = cis_neg_m1(theta);
            let exact = -2.0 * (0.5 * theta).sin().powi(2);
            assert!((c1 - exact).abs() <= 1e-15 * exact.abs(), "{theta}");
            assert!((s - cis_neg(theta).1).abs() < 4e-16);
        }
    }
}
