//! Log-space special functions: multivariate gamma, Stiefel-manifold volume
//! and sphere surface area.

use std::f64::consts::PI;

use crate::error::{MmvError, Result};

/// ln Gamma(a) for a > 0, delegated to a Lanczos-class approximation.
pub fn ln_gamma(a: f64) -> f64 {
    statrs::function::gamma::ln_gamma(a)
}

/// Log multivariate gamma:
/// ln Gamma_m(a) = (m(m-1)/4) ln pi + sum_{i=1..m} ln Gamma(a - (i-1)/2),
/// defined for a > (m-1)/2.
pub fn ln_mv_gamma(m: usize, a: f64) -> Result<f64> {
    if m == 0 {
        return Err(MmvError::Domain("multivariate gamma needs m >= 1".into()));
    }
    let bound = (m as f64 - 1.0) / 2.0;
    if !(a > bound) {
        return Err(MmvError::Domain(format!(
            "multivariate gamma needs a > (m-1)/2 = {bound}, got a = {a}"
        )));
    }
    let mut sum = (m * (m - 1)) as f64 / 4.0 * PI.ln();
    for i in 0..m {
        sum += ln_gamma(a - i as f64 / 2.0);
    }
    Ok(sum)
}

/// Log volume of the Stiefel manifold of n x m orthonormal frames:
/// m ln 2 + (nm/2) ln pi - ln Gamma_m(n/2), for n >= m >= 1.
pub fn ln_stiefel_volume(n: usize, m: usize) -> Result<f64> {
    if m == 0 || n < m {
        return Err(MmvError::Domain(format!(
            "Stiefel volume needs n >= m >= 1, got n = {n}, m = {m}"
        )));
    }
    Ok(m as f64 * 2.0f64.ln() + (n * m) as f64 / 2.0 * PI.ln() - ln_mv_gamma(m, n as f64 / 2.0)?)
}

/// Log surface area of the unit sphere in real dimension d > 0:
/// ln(2 pi^{d/2} / Gamma(d/2)). Real d is accepted so radial normalizers
/// extend to non-integer total dimensions.
pub fn ln_sphere_area(d: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(MmvError::Domain(format!(
            "sphere area needs dimension d > 0, got {d}"
        )));
    }
    Ok(2.0f64.ln() + d / 2.0 * PI.ln() - ln_gamma(d / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mv_gamma_reductions() {
        assert_abs_diff_eq!(ln_mv_gamma(1, 1.0).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            ln_mv_gamma(1, 0.5).unwrap(),
            PI.sqrt().ln(),
            epsilon = 1e-13
        );
        // Gamma_2(3/2) = pi^{1/2} Gamma(3/2) Gamma(1) = pi/2.
        assert_abs_diff_eq!(
            ln_mv_gamma(2, 1.5).unwrap(),
            (PI / 2.0).ln(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn mv_gamma_domain_bound() {
        let err = ln_mv_gamma(3, 1.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(m-1)/2 = 1"), "unexpected message: {msg}");
    }

    #[test]
    fn mv_gamma_recurrence() {
        // ln Gamma_m(a+1) - ln Gamma_m(a) = sum_i ln(a - (i-1)/2).
        let mut state = 42u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for m in 1..=5usize {
            for _ in 0..200 {
                let a = (m as f64 - 1.0) / 2.0 + 0.05 + 10.0 * next();
                let lhs = ln_mv_gamma(m, a + 1.0).unwrap() - ln_mv_gamma(m, a).unwrap();
                let rhs: f64 = (0..m).map(|i| (a - i as f64 / 2.0).ln()).sum();
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn stiefel_volume_known_values() {
        assert_abs_diff_eq!(
            ln_stiefel_volume(1, 1).unwrap(),
            2.0f64.ln(),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            ln_stiefel_volume(2, 1).unwrap(),
            (2.0 * PI).ln(),
            epsilon = 1e-10
        );
        // Orthogonal-group volumes under the same frame measure:
        // O(1) = 2, O(2) = 4 pi (two copies of the circle),
        // O(3) = 16 pi^2 (double cover of SO(3), which has volume 8 pi^2).
        assert_abs_diff_eq!(
            ln_stiefel_volume(2, 2).unwrap(),
            (4.0 * PI).ln(),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            ln_stiefel_volume(3, 3).unwrap(),
            (16.0 * PI * PI).ln(),
            epsilon = 1e-10
        );
        assert!(ln_stiefel_volume(1, 2).is_err());
    }

    #[test]
    fn stiefel_volume_matches_monte_carlo_frames() {
        // Independent oracle for V(n=3, m=2): average the invariant density
        // over random Euler angles. A 2-frame in R^3 is the first two columns
        // of a rotation; in Z-Y-Z angles the invariant measure is
        // sin(beta) d(alpha) d(beta) d(gamma), so the volume is
        // (2 pi) * pi * (2 pi) * E[sin beta] under uniform angles.
        let mut state = 7u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let beta = PI * next();
            acc += beta.sin();
        }
        let mc = (2.0 * PI) * PI * (2.0 * PI) * acc / n as f64;
        let exact = ln_stiefel_volume(3, 2).unwrap().exp();
        assert!(
            (mc - exact).abs() / exact < 0.01,
            "MC {mc} vs exact {exact}"
        );
    }

    #[test]
    fn sphere_areas() {
        assert_abs_diff_eq!(
            ln_sphere_area(2.0).unwrap(),
            (2.0 * PI).ln(),
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(
            ln_sphere_area(3.0).unwrap(),
            (4.0 * PI).ln(),
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(ln_sphere_area(1.0).unwrap(), 2.0f64.ln(), epsilon = 1e-13);
    }
}
