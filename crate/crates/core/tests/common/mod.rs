//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nfdtoll_core::direct::HyperRect;
use nfdtoll_core::stats::normal_pdf;

/// Gaussian correlation matrix `Ψ + λI` built straight from the definition.
pub fn dense_correlation(design: &[Vec<f64>], theta: &[f64], lambda: f64) -> DMatrix<f64> {
    let n = design.len();
    DMatrix::from_fn(n, n, |i, j| {
        let s: f64 = design[i]
            .iter()
            .zip(&design[j])
            .zip(theta)
            .map(|((a, b), t)| t * (a - b) * (a - b))
            .sum();
        (-s).exp() + if i == j { lambda } else { 0.0 }
    })
}

/// Multivariate-normal log density of `y` under `N(μ̂1, σ̂²R)` with the
/// generalized-least-squares `μ̂` and the maximum-likelihood `σ̂²`, using a
/// dense LU inverse and determinant.
pub fn dense_mvn_log_density(design: &[Vec<f64>], y: &[f64], theta: &[f64], lambda: f64) -> f64 {
    let n = y.len();
    let r = dense_correlation(design, theta, lambda);
    let r_inv = r.clone().try_inverse().expect("invertible correlation");
    let ones = DVector::from_element(n, 1.0);
    let yv = DVector::from_column_slice(y);
    let mu = (ones.transpose() * &r_inv * &yv)[0] / (ones.transpose() * &r_inv * &ones)[0];
    let resid = &yv - &ones * mu;
    let sigma2 = (resid.transpose() * &r_inv * &resid)[0] / n as f64;
    let cov = &r * sigma2;
    let cov_inv = cov.clone().try_inverse().expect("invertible covariance");
    let quad = (resid.transpose() * cov_inv * &resid)[0];
    let ln_det = cov.determinant().ln();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + ln_det + quad)
}

/// The concentrated likelihood drops `−(n/2)(ln 2π + 1)` from the full
/// log density at the profiled optimum.
pub fn concentrated_from_dense(design: &[Vec<f64>], y: &[f64], theta: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    dense_mvn_log_density(design, y, theta, lambda) + 0.5 * n * ((2.0 * std::f64::consts::PI).ln() + 1.0)
}

/// `σ_ri²(1 − ψᵀΨ⁻¹ψ)` from a dense inverse of the unregularized `Ψ`.
pub fn dense_ri_factor(design: &[Vec<f64>], theta: &[f64], u: &[f64]) -> f64 {
    let psi_m = dense_correlation(design, theta, 0.0);
    let inv = psi_m.try_inverse().expect("invertible Ψ");
    let psi = DVector::from_iterator(
        design.len(),
        design.iter().map(|row| {
            let s: f64 = row.iter().zip(u).zip(theta).map(|((a, b), t)| t * (a - b) * (a - b)).sum();
            (-s).exp()
        }),
    );
    1.0 - (psi.transpose() * inv * &psi)[0]
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// `∫_{−∞}^{y_min} (y_min − y) φ((y − ŷ)/s)/s dy` by quadrature over 64
/// panels; below `min(ŷ, y_min) − 12s` the integrand is under 1e−30.
pub fn ei_by_quadrature(mean: f64, s: f64, y_min: f64) -> f64 {
    let lo = mean.min(y_min) - 12.0 * s;
    let f = |y: f64| (y_min - y) * normal_pdf((y - mean) / s) / s;
    let panels = 64;
    let h = (y_min - lo) / panels as f64;
    (0..panels)
        .map(|i| adaptive_simpson(&f, lo + i as f64 * h, lo + (i + 1) as f64 * h, 1e-15))
        .sum()
}

/// Potentially optimal rectangles straight from Jones' conditions: `j`
/// qualifies when some `K > 0` satisfies `f_j − K d_j ≤ f_i − K d_i` for all
/// `i` and `f_j − K d_j ≤ f_min − ε|f_min|`.
pub fn brute_force_potentially_optimal(rects: &[HyperRect], epsilon: f64) -> Vec<usize> {
    let f_min = rects.iter().map(|r| r.f_center).filter(|f| f.is_finite()).fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    for (j, rj) in rects.iter().enumerate() {
        if !rj.f_center.is_finite() {
            continue;
        }
        let mut lower = 0.0f64;
        let mut upper = f64::INFINITY;
        let mut ok = true;
        for (i, ri) in rects.iter().enumerate() {
            if i == j || !ri.f_center.is_finite() {
                continue;
            }
            if ri.diameter < rj.diameter {
                lower = lower.max((rj.f_center - ri.f_center) / (rj.diameter - ri.diameter));
            } else if ri.diameter > rj.diameter {
                upper = upper.min((ri.f_center - rj.f_center) / (ri.diameter - rj.diameter));
            } else if ri.f_center < rj.f_center {
                ok = false;
            }
        }
        if !ok || lower > upper || upper <= 0.0 {
            continue;
        }
        if upper.is_finite() && rj.f_center - upper * rj.diameter > f_min - epsilon * f_min.abs() {
            continue;
        }
        out.push(j);
    }
    out
}

/// Lane-km weighted mean and standard deviation by the two-pass textbook
/// formula.
pub fn weighted_moments(k: &[f64], w: &[f64]) -> (f64, f64) {
    let total: f64 = w.iter().sum();
    let mean = k.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    let var = k.iter().zip(w).map(|(a, b)| b * (a - mean).powi(2)).sum::<f64>() / total;
    (mean, var.sqrt())
}

/// Branin function rescaled to the unit square.
pub fn branin_unit(x: &[f64]) -> f64 {
    let a = 15.0 * x[0] - 5.0;
    let b = 15.0 * x[1];
    let pi = std::f64::consts::PI;
    (b - 5.1 / (4.0 * pi * pi) * a * a + 5.0 / pi * a - 6.0).powi(2) + 10.0 * (1.0 - 1.0 / (8.0 * pi)) * a.cos() + 10.0
}
