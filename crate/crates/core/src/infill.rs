//! Expected-improvement infill: closed-form EI, probability of feasibility,
//! their product, and the GA search for the next sample point.
//!
//! Proposals always use the reinterpolation variance `ŝ_ri²`, which vanishes
//! at existing samples, so an already sampled point is never re-proposed.

use alloc::vec::Vec;

use crate::error::invalid;
use crate::ga::{ga_maximize, ga_maximize_seeded, GAParams};
use crate::stats::{normal_cdf, normal_pdf, standard_normal};
use crate::surrogate::RKModel;
use crate::{Bounds, Error, Result, Rng, Smoothing};

/// Minimum unit-cube distance between a proposal and every existing sample.
pub const MIN_PROPOSAL_SEPARATION: f64 = 1e-9;

/// `E[max(y_min − Y, 0)]` for `Y ~ N(mean, variance)`; zero when the
/// variance is zero.
pub fn expected_improvement(mean: f64, variance: f64, y_min: f64) -> Result<f64> {
    if !(variance >= 0.0) {
        return Err(invalid("expected improvement needs a variance ≥ 0"));
    }
    if variance == 0.0 {
        return Ok(0.0);
    }
    let s = libm::sqrt(variance);
    let u = (y_min - mean) / s;
    Ok((s * (u * normal_cdf(u) + normal_pdf(u))).max(0.0))
}

/// `P[C ≤ delta_max]` for `C ~ N(mean, variance)`.
pub fn prob_feasible(mean: f64, variance: f64, delta_max: f64) -> Result<f64> {
    if !(variance >= 0.0) {
        return Err(invalid("probability of feasibility needs a variance ≥ 0"));
    }
    if variance == 0.0 {
        return Ok(if mean <= delta_max { 1.0 } else { 0.0 });
    }
    Ok(normal_cdf((delta_max - mean) / libm::sqrt(variance)))
}

/// Constrained expected improvement `E[I]·P[c ≤ Δ_max]`.
pub fn constrained_ei(ei: f64, p_feasible: f64) -> f64 {
    debug_assert!(ei >= 0.0 && (0.0..=1.0).contains(&p_feasible));
    ei * p_feasible
}

/// Best observed objective: the minimum over samples whose observed
/// constraint satisfies `c ≤ Δ_max`, or over all samples when there is no
/// constraint or no sample is feasible.
pub fn best_observed(objectives: &[f64], constraint: Option<(&[f64], f64)>) -> f64 {
    let all = || objectives.iter().copied().fold(f64::INFINITY, f64::min);
    match constraint {
        None => all(),
        Some((c, delta_max)) => {
            let feasible = objectives
                .iter()
                .zip(c)
                .filter(|(_, c)| **c <= delta_max)
                .map(|(y, _)| *y)
                .fold(f64::INFINITY, f64::min);
            if feasible.is_finite() {
                feasible
            } else {
                all()
            }
        }
    }
}

/// Surfaces and limits that define the acquisition function.
#[derive(Debug, Clone, Copy)]
pub struct AcquisitionContext<'a> {
    pub obj_model: &'a RKModel,
    /// Constraint surface and its limit `Δ_max`.
    pub constraint: Option<(&'a RKModel, f64)>,
    pub y_min: f64,
    pub bounds: &'a Bounds,
    /// Smoothing limits; `None` searches the plain box.
    pub smoothing: Option<Smoothing>,
}

impl AcquisitionContext<'_> {
    /// Reinterpolation EI, times the reinterpolation probability of
    /// feasibility when a constraint is present.
    pub fn acquisition(&self, x: &[f64]) -> f64 {
        let p = self.obj_model.predict_unit(&self.obj_model.to_unit(x));
        let ei = expected_improvement(p.mean, p.ri_variance, self.y_min).unwrap_or(0.0);
        match self.constraint {
            None => ei,
            Some((con, delta_max)) => {
                let c = con.predict_unit(&con.to_unit(x));
                let pf = prob_feasible(c.mean, c.ri_variance, delta_max).unwrap_or(0.0);
                constrained_ei(ei, pf)
            }
        }
    }

    /// Reinterpolation EI of the objective alone, ignoring the constraint.
    pub fn unconstrained_ei(&self, x: &[f64]) -> f64 {
        let p = self.obj_model.predict_unit(&self.obj_model.to_unit(x));
        expected_improvement(p.mean, p.ri_variance, self.y_min).unwrap_or(0.0)
    }

    /// Inputs of the `k` best samples: observed-feasible ones first, each
    /// group by observed objective.
    pub fn incumbents(&self, k: usize) -> Vec<Vec<f64>> {
        let y = self.obj_model.responses();
        let infeasible = |i: usize| match self.constraint {
            Some((con, d)) => con.responses().get(i).map_or(true, |c| *c > d),
            None => false,
        };
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| infeasible(a).cmp(&infeasible(b)).then(y[a].total_cmp(&y[b])));
        order.iter().take(k).map(|&i| self.obj_model.inputs()[i].clone()).collect()
    }

    fn nearest_sample_distance(&self, x: &[f64]) -> f64 {
        let u = self.obj_model.to_unit(x);
        self.obj_model
            .design()
            .iter()
            .map(|row| libm::sqrt(row.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Next infill point and its acquisition value.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub acquisition: f64,
    /// The acquisition was flat at zero (or only matched a sampled point), so
    /// the point maximizes the distance to existing samples instead.
    pub space_filling: bool,
}

/// Fraction of the GA's initial population seeded with incumbents.
const INCUMBENT_SEED_SHARE: usize = 5;
/// Seed offset from an incumbent, as a fraction of each box side.
const SEED_STEP: f64 = 0.01;

/// Maximizes the acquisition with the GA over the box, repairing candidates to
/// the smoothing constraints. A fifth of the initial population starts at the
/// best samples: the acquisition is zero there but positive in a thin shell
/// around them, which uniform draws rarely hit in higher dimensions.
pub fn propose_infill(ctx: &AcquisitionContext<'_>, ga: &GAParams, rng: &mut Rng) -> Result<Proposal> {
    if ctx.obj_model.dim() != ctx.bounds.dim() {
        return Err(invalid("objective model and bounds differ in dimension"));
    }
    let box_ = ctx.bounds.pairs();
    let repair_fn = |x: &mut [f64]| {
        if let Some(s) = ctx.smoothing {
            s.repair(x, ctx.bounds);
        }
    };
    let repair: Option<&dyn Fn(&mut [f64])> = if ctx.smoothing.is_some() { Some(&repair_fn) } else { None };

    // seeds sit a small step off the incumbents, where the acquisition is
    // already positive
    let mut seeds = ctx.incumbents((ga.population_size / INCUMBENT_SEED_SHARE).max(1));
    for x in &mut seeds {
        for (v, &(l, u)) in x.iter_mut().zip(&box_) {
            *v = (*v + SEED_STEP * (u - l) * standard_normal(rng)).clamp(l, u);
        }
    }
    let best = ga_maximize_seeded(|x| ctx.acquisition(x), &box_, repair, &seeds, ga, rng)?;
    if best.value > 0.0 && ctx.nearest_sample_distance(&best.point) > MIN_PROPOSAL_SEPARATION {
        return Ok(Proposal {
            point: best.point,
            acquisition: best.value,
            space_filling: false,
        });
    }
    let spread = ga_maximize(|x| ctx.nearest_sample_distance(x), &box_, repair, ga, rng)?;
    if !(spread.value > MIN_PROPOSAL_SEPARATION) {
        return Err(Error::Numerical(alloc::string::String::from(
            "no unsampled feasible point found for infill",
        )));
    }
    let acquisition = ctx.acquisition(&spread.point);
    Ok(Proposal {
        point: spread.point,
        acquisition,
        space_filling: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_reference_values() {
        assert_eq!(expected_improvement(1.0, 0.0, 2.0).unwrap(), 0.0);
        let v = expected_improvement(0.0, 1.0, 0.0).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!(expected_improvement(10.0, 0.01, 0.0).unwrap() < 1e-20);
        assert!(expected_improvement(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn feasibility_reference_values() {
        assert_eq!(prob_feasible(8.0, 4.0, 8.0).unwrap(), 0.5);
        assert_eq!(prob_feasible(7.0, 0.0, 8.0).unwrap(), 1.0);
        assert_eq!(prob_feasible(9.0, 0.0, 8.0).unwrap(), 0.0);
        let p = prob_feasible(8.0 + 3.0 * 0.5, 0.25, 8.0).unwrap();
        assert!((p - 0.001_349_898_031_630_095).abs() < 1e-12);
        assert!(prob_feasible(0.0, -1e-3, 1.0).is_err());
    }

    #[test]
    fn constrained_product() {
        assert_eq!(constrained_ei(0.7, 1.0), 0.7);
        assert_eq!(constrained_ei(0.7, 0.0), 0.0);
        assert!((constrained_ei(0.4, 0.25) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn best_observed_fallback() {
        let y = [3.0, 1.0, 2.0];
        assert_eq!(best_observed(&y, None), 1.0);
        assert_eq!(best_observed(&y, Some((&[0.0, 9.0, 1.0], 5.0))), 2.0);
        assert_eq!(best_observed(&y, Some((&[6.0, 9.0, 7.0], 5.0))), 1.0);
    }
}
