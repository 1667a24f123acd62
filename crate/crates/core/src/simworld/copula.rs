//! Bivariate-normal orthant probabilities and the Gaussian correlation that
//! reproduces a target Bernoulli correlation after thresholding.

use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `P(Z1 <= a, Z2 <= b)` for standard normals with correlation `r`, |r| < 1.
///
/// Integrates the derivative of the orthant probability in `r` after the
/// substitution `r = sin θ`, which removes the endpoint singularity.
pub fn bivariate_normal_cdf(a: f64, b: f64, r: f64) -> f64 {
    let r = r.clamp(-1.0, 1.0);
    let base = normal_cdf(a) * normal_cdf(b);
    if r == 0.0 {
        return base;
    }
    let integrand = |theta: f64| {
        let c = theta.cos();
        let c2 = c * c;
        let num = a * a - 2.0 * a * b * theta.sin() + b * b;
        if c2 < 1e-300 {
            if num.abs() < 1e-300 {
                (-0.5 * a * a).exp()
            } else {
                0.0
            }
        } else {
            (-num / (2.0 * c2)).exp()
        }
    };
    base + adaptive_simpson(&integrand, 0.0, r.asin(), 1e-14) / (2.0 * PI)
}

/// Joint success probability of two Bernoulli variables with marginals
/// `p1`, `p2` and Pearson correlation `rho`.
pub fn joint_success(p1: f64, p2: f64, rho: f64) -> f64 {
    p1 * p2 + rho * (p1 * (1.0 - p1) * p2 * (1.0 - p2)).sqrt()
}

/// Admissible Pearson correlation range for Bernoulli(`p1`), Bernoulli(`p2`).
pub fn feasible_range(p1: f64, p2: f64) -> (f64, f64) {
    let sd = (p1 * (1.0 - p1) * p2 * (1.0 - p2)).sqrt();
    let lo = ((p1 + p2 - 1.0).max(0.0) - p1 * p2) / sd;
    let hi = (p1.min(p2) - p1 * p2) / sd;
    (lo, hi)
}

/// Gaussian correlation whose thresholded pair has Bernoulli correlation `rho`.
///
/// Bisection on the monotone map `r ↦ Φ2(z1, z2; r)`; `rho` must lie strictly
/// inside the feasible range.
pub fn latent_correlation(p1: f64, p2: f64, rho: f64, tol: f64) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    let target = joint_success(p1, p2, rho);
    let (z1, z2) = (normal_quantile(p1), normal_quantile(p2));
    let (mut lo, mut hi) = (-1.0 + 1e-15, 1.0 - 1e-15);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if bivariate_normal_cdf(z1, z2, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthant_at_origin_matches_closed_form() {
        // P(Z1<0, Z2<0) = 1/4 + asin(r)/(2π)
        for r in [-0.9, -0.5, -0.1, 0.0, 0.3, 0.7, 0.95] {
            let exact = 0.25 + f64::asin(r) / (2.0 * PI);
            assert!((bivariate_normal_cdf(0.0, 0.0, r) - exact).abs() < 1e-12, "r={r}");
        }
    }

    #[test]
    fn orthant_limits_approach_frechet_bounds() {
        let (a, b) = (normal_quantile(0.3), normal_quantile(0.6));
        assert!((bivariate_normal_cdf(a, b, 0.999_999) - 0.3).abs() < 2e-3);
        assert!(bivariate_normal_cdf(a, b, -0.999_999).abs() < 2e-3);
    }

    #[test]
    fn orthant_matches_midpoint_quadrature() {
        // Oracle: brute-force 2-D midpoint rule on the density.
        let (a, b, r) = (0.4, -0.3, 0.55);
        let n = 1200;
        let lo = -8.0;
        let (ha, hb) = ((a - lo) / n as f64, (b - lo) / n as f64);
        let det = 1.0 - r * r;
        let mut sum = 0.0;
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * ha;
            for j in 0..n {
                let y = lo + (j as f64 + 0.5) * hb;
                let q = (x * x - 2.0 * r * x * y + y * y) / det;
                sum += (-0.5 * q).exp();
            }
        }
        let brute = sum * ha * hb / (2.0 * PI * det.sqrt());
        assert!((bivariate_normal_cdf(a, b, r) - brute).abs() < 1e-5);
    }

    #[test]
    fn latent_correlation_round_trips() {
        for &(p1, p2, rho) in &[(0.4, 0.4, 0.3), (0.76, 0.76, -0.15), (0.2, 0.7, 0.1)] {
            let r = latent_correlation(p1, p2, rho, 1e-10);
            let (z1, z2) = (normal_quantile(p1), normal_quantile(p2));
            let joint = bivariate_normal_cdf(z1, z2, r);
            assert!((joint - joint_success(p1, p2, rho)).abs() < 1e-9);
        }
    }

    #[test]
    fn feasible_range_for_equal_marginals() {
        let (lo, hi) = feasible_range(0.76, 0.76);
        assert!((lo + 0.24 / 0.76).abs() < 1e-12);
        assert!((hi - 1.0).abs() < 1e-12);
    }
}
