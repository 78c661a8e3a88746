//! Ordinary and regressing kriging.
//!
//! Inputs are normalized to the unit cube and responses standardized before
//! fitting. The correlation model is the anisotropic Gaussian kernel
//! `ψ(x, x') = exp(−Σ θ_l (x_l − x'_l)²)` and the regressing variant adds `λ`
//! to the diagonal: `R = Ψ + λI`. Hyperparameters `(θ, λ)` maximize the
//! concentrated log-likelihood, searched by the [`ga`](crate::ga) in log₁₀
//! space.
//!
//! When a Cholesky factorization needs diagonal jitter `j`, the jitter is
//! treated as a microscale nugget of the signal kernel (added to `ψ` only for
//! coincident points), so interpolation at the training inputs stays exact.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::ga::{ga_maximize, GAParams};
use crate::linalg::Cholesky;
use crate::{Error, Result, Rng};

/// Hyperparameter search configuration for [`RKModel::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Box for every `θ_l`, searched in log₁₀ space.
    pub theta_bounds: (f64, f64),
    /// Box for `λ`, searched in log₁₀ space. Equal ends fix `λ` (this is the
    /// only way to get `λ = 0`, ordinary kriging).
    pub lambda_bounds: (f64, f64),
    pub ga: GAParams,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            theta_bounds: (1e-3, 1e2),
            lambda_bounds: (1e-6, 1.0),
            ga: GAParams::default(),
        }
    }
}

impl FitOptions {
    /// Ordinary (interpolating) kriging: `λ` fixed at 0.
    pub fn interpolating() -> Self {
        FitOptions {
            lambda_bounds: (0.0, 0.0),
            ..FitOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let (tl, tu) = self.theta_bounds;
        if !(tl > 0.0 && tl <= tu && tu.is_finite()) {
            return Err(invalid("theta bounds must satisfy 0 < lower ≤ upper < ∞"));
        }
        let (ll, lu) = self.lambda_bounds;
        if !(ll >= 0.0 && ll <= lu && lu.is_finite()) {
            return Err(invalid("lambda bounds must satisfy 0 ≤ lower ≤ upper < ∞"));
        }
        if ll < lu && ll == 0.0 {
            return Err(invalid("a searched lambda range needs a positive lower end (log scale)"));
        }
        Ok(())
    }
}

/// Gaussian correlation `exp(−Σ θ_l (x1_l − x2_l)²)`.
pub fn correlation(x1: &[f64], x2: &[f64], theta: &[f64]) -> Result<f64> {
    if x1.len() != x2.len() || x1.len() != theta.len() {
        return Err(invalid(format!(
            "correlation dimension mismatch: {}, {}, theta {}",
            x1.len(),
            x2.len(),
            theta.len()
        )));
    }
    if theta.iter().any(|t| !(*t >= 0.0)) {
        return Err(invalid("correlation scaling coefficients must be ≥ 0"));
    }
    Ok(corr_unchecked(x1, x2, theta))
}

#[inline]
fn corr_unchecked(x1: &[f64], x2: &[f64], theta: &[f64]) -> f64 {
    let s: f64 = x1
        .iter()
        .zip(x2)
        .zip(theta)
        .map(|((a, b), t)| t * (a - b) * (a - b))
        .sum();
    libm::exp(-s)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn has_duplicates(design: &[Vec<f64>]) -> bool {
    (0..design.len()).any(|i| ((i + 1)..design.len()).any(|j| sq_dist(&design[i], &design[j]) == 0.0))
}

/// `Ψ + shift·I` for the given design, row-major.
fn corr_matrix(design: &[Vec<f64>], theta: &[f64], shift: f64) -> Vec<f64> {
    let n = design.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0 + shift;
        for j in (i + 1)..n {
            let c = corr_unchecked(&design[i], &design[j], theta);
            m[i * n + j] = c;
            m[j * n + i] = c;
        }
    }
    m
}

/// Profiled quantities of the Gaussian-process likelihood at fixed `(θ, λ)`.
struct Profile {
    chol: Cholesky,
    nugget: f64,
    mu: f64,
    sigma2: f64,
    log_likelihood: f64,
}

fn profile(design: &[Vec<f64>], y: &[f64], theta: &[f64], lambda: f64) -> Result<Profile> {
    let n = design.len();
    if n == 0 || y.len() != n {
        return Err(invalid("design and responses must be nonempty and equally long"));
    }
    if lambda == 0.0 && has_duplicates(design) {
        // coincident rows make Ψ exactly singular; jitter would only mask it
        return Err(Error::Factorization { jitter: 0.0 });
    }
    let r = corr_matrix(design, theta, lambda);
    let (chol, nugget) = Cholesky::factor_with_jitter(&r, n)?;
    let ones = vec![1.0; n];
    let r_inv_one = chol.solve(&ones);
    let r_inv_y = chol.solve(y);
    let denom: f64 = r_inv_one.iter().sum();
    let mu = r_inv_y.iter().sum::<f64>() / denom;
    let resid: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let sigma2 = (chol.quad_form_inv(&resid) / n as f64).max(0.0);
    let ln_det = chol.ln_det();
    let log_likelihood = -0.5 * n as f64 * libm::log(sigma2.max(f64::MIN_POSITIVE)) - 0.5 * ln_det;
    Ok(Profile {
        chol,
        nugget,
        mu,
        sigma2,
        log_likelihood,
    })
}

/// Concentrated log-likelihood `−(n/2) ln σ̂² − ½ ln det R` with `μ̂` and `σ̂²`
/// profiled out. `design` is used as given (callers normalize it).
pub fn log_likelihood(design: &[Vec<f64>], y: &[f64], theta: &[f64], lambda: f64) -> Result<f64> {
    if design.len() < 2 {
        return Err(invalid("log-likelihood needs n ≥ 2"));
    }
    check_design(design, theta.len())?;
    if !(lambda >= 0.0) {
        return Err(invalid("lambda must be ≥ 0"));
    }
    if theta.iter().any(|t| !(*t >= 0.0)) {
        return Err(invalid("theta must be ≥ 0"));
    }
    Ok(profile(design, y, theta, lambda)?.log_likelihood)
}

fn check_design(design: &[Vec<f64>], d: usize) -> Result<()> {
    if design.iter().any(|row| row.len() != d) {
        return Err(invalid("design rows must all have the hyperparameter dimension"));
    }
    Ok(())
}

/// Kriging prediction at one point, in the original response units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// Regression prediction error `ŝ²`.
    pub variance: f64,
    /// Reinterpolation prediction error `ŝ_ri²`; vanishes at training inputs.
    pub ri_variance: f64,
    /// The point lies outside the unit cube after normalization.
    pub extrapolated: bool,
}

/// Leave-one-out record for one training sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CVRecord {
    pub index: usize,
    pub observed: f64,
    pub predicted: f64,
    pub std_error: f64,
    pub standardized_residual: f64,
    /// The held-out prediction has no positive standard error (or its fold
    /// could not be factorized); the residual is not meaningful.
    pub degenerate: bool,
}

/// Everything needed to rebuild a fitted model exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParts {
    pub inputs: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
    pub input_box: Vec<(f64, f64)>,
    pub theta: Vec<f64>,
    pub lambda: f64,
}

/// Fitted regressing-kriging model. Immutable once built.
#[derive(Debug, Clone)]
pub struct RKModel {
    inputs: Vec<Vec<f64>>,
    design: Vec<Vec<f64>>,
    responses: Vec<f64>,
    input_box: Vec<(f64, f64)>,
    y_mean: f64,
    y_scale: f64,
    theta: Vec<f64>,
    lambda: f64,
    nugget: f64,
    mu_hat: f64,
    sigma2_hat: f64,
    sigma2_ri: f64,
    log_likelihood: f64,
    r_chol: Cholesky,
    psi_chol: Cholesky,
    psi_nugget: f64,
    weights: Vec<f64>,
}

impl RKModel {
    /// Fits `(θ, λ)` by maximizing the concentrated likelihood with the GA.
    pub fn fit(
        inputs: &[Vec<f64>],
        responses: &[f64],
        input_box: &[(f64, f64)],
        options: &FitOptions,
        rng: &mut Rng,
    ) -> Result<Self> {
        options.validate()?;
        let (design, ys, _, _) = prepare(inputs, responses, input_box)?;
        let distinct = (0..design.len())
            .filter(|&i| (0..i).all(|j| sq_dist(&design[i], &design[j]) > 0.0))
            .count();
        if distinct < 2 {
            return Err(invalid("kriging fit needs at least 2 distinct sample points"));
        }
        let d = input_box.len();
        let (tl, tu) = options.theta_bounds;
        let (ll, lu) = options.lambda_bounds;
        let search_lambda = ll < lu;
        let mut ga_box: Vec<(f64, f64)> = vec![(libm::log10(tl), libm::log10(tu)); d];
        if search_lambda {
            ga_box.push((libm::log10(ll), libm::log10(lu)));
        }
        let decode = |g: &[f64]| -> (Vec<f64>, f64) {
            let theta = g[..d].iter().map(|v| libm::pow(10.0, *v)).collect();
            let lambda = if search_lambda { libm::pow(10.0, g[d]) } else { ll };
            (theta, lambda)
        };
        let best = ga_maximize(
            |g| {
                let (theta, lambda) = decode(g);
                profile(&design, &ys, &theta, lambda).map_or(f64::NEG_INFINITY, |p| p.log_likelihood)
            },
            &ga_box,
            None,
            &options.ga,
            rng,
        )?;
        let (theta, lambda) = decode(&best.point);
        Self::with_hyperparameters(inputs, responses, input_box, &theta, lambda)
    }

    /// Builds the model at fixed hyperparameters.
    pub fn with_hyperparameters(
        inputs: &[Vec<f64>],
        responses: &[f64],
        input_box: &[(f64, f64)],
        theta: &[f64],
        lambda: f64,
    ) -> Result<Self> {
        if theta.len() != input_box.len() {
            return Err(invalid("theta length must match the input dimension"));
        }
        if theta.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid("theta and lambda must be finite and ≥ 0"));
        }
        let (design, ys, y_mean, y_scale) = prepare(inputs, responses, input_box)?;
        let n = design.len();
        let p = profile(&design, &ys, theta, lambda)?;
        let resid: Vec<f64> = ys.iter().map(|v| v - p.mu).collect();
        let weights = p.chol.solve(&resid);

        let psi = corr_matrix(&design, theta, 0.0);
        let (psi_chol, psi_nugget) = Cholesky::factor_with_jitter(&psi, n)?;
        // (y − 1μ̂)ᵀ R⁻¹ Ψ R⁻¹ (y − 1μ̂) / n with the signal kernel Ψ + jI
        let mut quad = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += psi[i * n + j] * weights[j];
            }
            row += (p.nugget) * weights[i];
            quad += weights[i] * row;
        }
        let sigma2_ri = (quad / n as f64).max(0.0);

        Ok(RKModel {
            inputs: inputs.to_vec(),
            design,
            responses: responses.to_vec(),
            input_box: input_box.to_vec(),
            y_mean,
            y_scale,
            theta: theta.to_vec(),
            lambda,
            nugget: p.nugget,
            mu_hat: p.mu,
            sigma2_hat: p.sigma2,
            sigma2_ri,
            log_likelihood: p.log_likelihood,
            r_chol: p.chol,
            psi_chol,
            psi_nugget,
            weights,
        })
    }

    pub fn from_parts(parts: &ModelParts) -> Result<Self> {
        Self::with_hyperparameters(
            &parts.inputs,
            &parts.responses,
            &parts.input_box,
            &parts.theta,
            parts.lambda,
        )
    }

    pub fn to_parts(&self) -> ModelParts {
        ModelParts {
            inputs: self.inputs.clone(),
            responses: self.responses.clone(),
            input_box: self.input_box.clone(),
            theta: self.theta.clone(),
            lambda: self.lambda,
        }
    }

    pub fn len(&self) -> usize {
        self.design.len()
    }

    pub fn is_empty(&self) -> bool {
        self.design.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.input_box.len()
    }

    /// Training inputs normalized to the unit cube.
    pub fn design(&self) -> &[Vec<f64>] {
        &self.design
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn input_box(&self) -> &[(f64, f64)] {
        &self.input_box
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Diagonal jitter that the correlation factorization needed (usually 0).
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Estimated process mean `μ̂`, original units.
    pub fn mu_hat(&self) -> f64 {
        self.y_mean + self.y_scale * self.mu_hat
    }

    /// Estimated process variance `σ̂²`, original units.
    pub fn sigma2_hat(&self) -> f64 {
        self.y_scale * self.y_scale * self.sigma2_hat
    }

    /// Reinterpolation process variance `σ̂_ri²`, original units.
    pub fn sigma2_ri(&self) -> f64 {
        self.y_scale * self.y_scale * self.sigma2_ri
    }

    /// Concentrated log-likelihood of the standardized responses at `(θ, λ)`.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// `(mean, scale)` used to standardize the responses.
    pub fn standardization(&self) -> (f64, f64) {
        (self.y_mean, self.y_scale)
    }

    /// The assembled correlation matrix `R = Ψ + λI`, row-major.
    pub fn correlation_matrix(&self) -> Vec<f64> {
        corr_matrix(&self.design, &self.theta, self.lambda)
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        normalize(x, &self.input_box)
    }

    /// Prediction at `x` given in original input coordinates.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim() {
            return Err(invalid("prediction point has the wrong dimension"));
        }
        Ok(self.predict_unit(&self.to_unit(x)))
    }

    /// Prediction at a point already normalized to the unit cube.
    pub fn predict_unit(&self, u: &[f64]) -> Prediction {
        let n = self.design.len();
        let mut psi = Vec::with_capacity(n);
        let mut coincident = Vec::new();
        for (i, row) in self.design.iter().enumerate() {
            psi.push(corr_unchecked(u, row, &self.theta));
            if sq_dist(u, row) == 0.0 {
                coincident.push(i);
            }
        }
        let mut psi_r = psi.clone();
        for &i in &coincident {
            psi_r[i] += self.nugget;
        }
        let mean_std = self.mu_hat + psi_r.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
        let var_std = self.sigma2_hat
            * (1.0 + self.lambda + self.nugget - self.r_chol.quad_form_inv(&psi_r));
        let mut psi_ri = psi;
        for &i in &coincident {
            psi_ri[i] += self.psi_nugget;
        }
        // zero at training inputs is an identity; rounding would otherwise leave
        // an O(ε) residue that EI turns into `y_min − ŷ`
        let ri_std = if coincident.is_empty() {
            self.sigma2_ri * (1.0 + self.psi_nugget - self.psi_chol.quad_form_inv(&psi_ri))
        } else {
            0.0
        };
        let scale2 = self.y_scale * self.y_scale;
        Prediction {
            mean: self.y_mean + self.y_scale * mean_std,
            variance: (scale2 * var_std).max(0.0),
            ri_variance: (scale2 * ri_std).max(0.0),
            extrapolated: u.iter().any(|v| !(-1e-12..=1.0 + 1e-12).contains(v)),
        }
    }

    /// Leave-one-out cross-validation at the fitted `(θ, λ)`: each sample is
    /// predicted by a model built on the remaining `n − 1` samples.
    pub fn loo_cv(&self) -> Result<Vec<CVRecord>> {
        let n = self.len();
        if n < 3 {
            return Err(invalid("leave-one-out cross-validation needs n ≥ 3"));
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let inputs: Vec<Vec<f64>> = (0..n).filter(|&j| j != i).map(|j| self.inputs[j].clone()).collect();
            let ys: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| self.responses[j]).collect();
            let observed = self.responses[i];
            let fold = RKModel::with_hyperparameters(&inputs, &ys, &self.input_box, &self.theta, self.lambda)
                .ok()
                .map(|m| m.predict_unit(&self.design[i]));
            let rec = match fold {
                Some(p) => {
                    let se = libm::sqrt(p.variance);
                    let ok = se > 0.0 && se.is_finite();
                    CVRecord {
                        index: i,
                        observed,
                        predicted: p.mean,
                        std_error: se,
                        standardized_residual: if ok { (observed - p.mean) / se } else { 0.0 },
                        degenerate: !ok,
                    }
                }
                None => CVRecord {
                    index: i,
                    observed,
                    predicted: f64::NAN,
                    std_error: 0.0,
                    standardized_residual: 0.0,
                    degenerate: true,
                },
            };
            out.push(rec);
        }
        Ok(out)
    }
}

fn normalize(x: &[f64], input_box: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(input_box)
        .map(|(v, (l, u))| if u > l { (v - l) / (u - l) } else { 0.0 })
        .collect()
}

/// Normalizes inputs, standardizes responses and checks the sample.
fn prepare(
    inputs: &[Vec<f64>],
    responses: &[f64],
    input_box: &[(f64, f64)],
) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64, f64)> {
    if inputs.len() != responses.len() {
        return Err(invalid("inputs and responses differ in length"));
    }
    if input_box.is_empty() || input_box.iter().any(|(l, u)| !(l <= u)) {
        return Err(invalid("input box must be nonempty with lower ≤ upper"));
    }
    check_design(inputs, input_box.len())?;
    if responses.iter().any(|v| !v.is_finite()) {
        return Err(invalid("responses must be finite"));
    }
    if inputs.is_empty() {
        return Err(invalid("kriging needs at least one sample"));
    }
    let design: Vec<Vec<f64>> = inputs.iter().map(|x| normalize(x, input_box)).collect();
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    let var = responses.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = libm::sqrt(var);
    let scale = if sd > 1e-12 * (1.0 + mean.abs()) { sd } else { 1.0 };
    let ys = responses.iter().map(|v| (v - mean) / scale).collect();
    Ok((design, ys, mean, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grid_1d(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn correlation_cases() {
        let t = [2.0, 0.5];
        assert_eq!(correlation(&[0.3, 0.1], &[0.3, 0.1], &t).unwrap(), 1.0);
        assert_eq!(correlation(&[0.3, 0.1], &[0.9, 0.8], &[0.0, 0.0]).unwrap(), 1.0);
        let v = correlation(&[0.0], &[1.0], &[1.0]).unwrap();
        assert!((v - 0.367_879_441_171_442_33).abs() < 1e-15);
        assert!(correlation(&[0.0], &[1.0, 2.0], &[1.0]).is_err());
        assert!(correlation(&[0.0], &[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn duplicates_need_regularization() {
        let design = vec![vec![0.2, 0.2], vec![0.2, 0.2], vec![0.9, 0.1]];
        let y = [1.0, 1.0, 0.0];
        assert!(matches!(
            log_likelihood(&design, &y, &[1.0, 1.0], 0.0),
            Err(Error::Factorization { .. })
        ));
        assert!(log_likelihood(&design, &y, &[1.0, 1.0], 0.1).unwrap().is_finite());
    }

    #[test]
    fn two_identical_responses() {
        let inputs = vec![vec![0.0], vec![1.0]];
        let m = RKModel::with_hyperparameters(&inputs, &[2.5, 2.5], &[(0.0, 1.0)], &[1.0], 0.0).unwrap();
        assert!(m.sigma2_hat() >= 0.0);
        let p = m.predict(&[0.4]).unwrap();
        assert!((p.mean - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fewer_than_two_distinct_points() {
        let inputs = vec![vec![0.5], vec![0.5]];
        let r = RKModel::fit(&inputs, &[1.0, 2.0], &[(0.0, 1.0)], &FitOptions::default(), &mut Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn regression_keeps_variance_at_samples_but_not_ri() {
        let inputs = grid_1d(6);
        let y: Vec<f64> = inputs.iter().map(|x| libm::sin(6.0 * x[0])).collect();
        let m = RKModel::with_hyperparameters(&inputs, &y, &[(0.0, 1.0)], &[10.0], 0.05).unwrap();
        for x in &inputs {
            let p = m.predict(x).unwrap();
            assert!(p.variance > 0.0);
            assert!(p.ri_variance <= 1e-10 * m.sigma2_ri());
        }
        // ŝ_ri² ≤ ŝ² everywhere
        for k in 0..50 {
            let p = m.predict(&[k as f64 / 49.0]).unwrap();
            assert!(p.ri_variance <= p.variance + 1e-12);
        }
    }

    #[test]
    fn single_point_predicts_its_value() {
        let m = RKModel::with_hyperparameters(&[vec![0.3, 0.6]], &[7.25], &[(0.0, 1.0); 2], &[2.0, 5.0], 0.0).unwrap();
        for x in [[0.0, 0.0], [0.9, 0.1], [0.3, 0.6]] {
            assert_eq!(m.predict(&x).unwrap().mean, 7.25);
        }
    }

    #[test]
    fn cv_on_constant_data_is_flagged_or_zero() {
        let inputs = grid_1d(5);
        let y = [4.0; 5];
        let m = RKModel::with_hyperparameters(&inputs, &y, &[(0.0, 1.0)], &[3.0], 0.01).unwrap();
        for rec in m.loo_cv().unwrap() {
            assert!(rec.degenerate || rec.standardized_residual == 0.0);
            if !rec.degenerate {
                assert!(rec.std_error > 0.0);
            }
        }
    }

    #[test]
    fn cv_needs_three_points() {
        let m = RKModel::with_hyperparameters(&grid_1d(2), &[0.0, 1.0], &[(0.0, 1.0)], &[1.0], 0.0).unwrap();
        assert!(m.loo_cv().is_err());
    }

    #[test]
    fn rebuild_from_parts_is_identical() {
        let inputs = grid_1d(7);
        let y: Vec<f64> = inputs.iter().map(|x| x[0] * x[0]).collect();
        let m = RKModel::with_hyperparameters(&inputs, &y, &[(0.0, 1.0)], &[4.0], 1e-3).unwrap();
        let m2 = RKModel::from_parts(&m.to_parts()).unwrap();
        assert_eq!(m.mu_hat().to_bits(), m2.mu_hat().to_bits());
        assert_eq!(m.predict(&[0.33]).unwrap(), m2.predict(&[0.33]).unwrap());
    }
}
