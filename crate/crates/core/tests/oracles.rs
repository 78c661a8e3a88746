mod common;

use common::*;
use nfdtoll_core::direct::{Direct, DEFAULT_EPSILON};
use nfdtoll_core::doe::{lhs, maximin_lhs};
use nfdtoll_core::infill::expected_improvement;
use nfdtoll_core::simnet::{fit_lower_envelope, spatial_spread};
use nfdtoll_core::surrogate::{log_likelihood, RKModel};
use nfdtoll_core::Rng;
use rand::{Rng as _, SeedableRng};

#[test]
fn likelihood_matches_dense_gaussian_density() {
    let mut rng = Rng::seed_from_u64(2024);
    for case in 0..30 {
        let n = rng.gen_range(3..=20);
        let d = rng.gen_range(1..=4);
        let design: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let theta: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.gen_range(-1.0..1.0))).collect();
        let lambda = 10f64.powf(rng.gen_range(-3.0..0.0));
        let ours = log_likelihood(&design, &y, &theta, lambda).unwrap();
        let oracle = concentrated_from_dense(&design, &y, &theta, lambda);
        assert!(
            (ours - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
            "case {case}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn closed_form_ei_matches_quadrature() {
    for i in 0..12 {
        for j in 0..12 {
            let gap = -3.0 + 6.0 * i as f64 / 11.0;
            let s = 0.05 + 2.0 * j as f64 / 11.0;
            let ei = expected_improvement(gap, s * s, 0.0).unwrap();
            let q = ei_by_quadrature(gap, s, 0.0);
            assert!((ei - q).abs() < 1e-8, "gap {gap} s {s}: {ei} vs {q}");
        }
    }
}

#[test]
fn maximin_keeps_the_best_replayed_candidate() {
    for seed in 0..10 {
        let chosen = maximin_lhs(9, 3, 25, &mut Rng::seed_from_u64(seed)).unwrap();
        let mut replay = Rng::seed_from_u64(seed);
        let candidates: Vec<_> = (0..25).map(|_| lhs(9, 3, &mut replay).unwrap()).collect();
        let best = candidates.iter().map(|c| c.min_pairwise_distance()).fold(0.0, f64::max);
        assert_eq!(chosen.min_pairwise_distance(), best);
        assert!(candidates.contains(&chosen));
    }
}

#[test]
fn potentially_optimal_matches_jones_conditions() {
    let functions: [fn(&[f64]) -> f64; 3] = [
        |x| (x[0] - 0.3).powi(2) + (x[1] - 0.3).powi(2),
        |x| branin_unit(x),
        |x| (5.0 * x[0]).sin() * (3.0 * x[1]).cos() + x[0],
    ];
    for f in functions {
        let mut state = Direct::new(f, &[(0.0, 1.0), (0.0, 1.0)], DEFAULT_EPSILON).unwrap();
        for _ in 0..15 {
            let po = state.potentially_optimal();
            let oracle = brute_force_potentially_optimal(state.rects(), state.epsilon());
            assert_eq!(po, oracle);
            state.divide(&po);
        }
    }
}

#[test]
fn envelope_recovers_planted_cubics() {
    let mut rng = Rng::seed_from_u64(5);
    for (a, b, c) in [(-0.0002032, 0.004432, 1.587), (0.001, -0.05, 0.9), (0.0, 0.0, 0.3)] {
        let samples: Vec<(f64, f64)> = (0..400)
            .map(|_| {
                let k: f64 = rng.gen_range(0.5..80.0);
                (k, a * k * k * k + b * k * k + c * k)
            })
            .collect();
        let e = fit_lower_envelope(&samples, 20).unwrap();
        for (got, want) in [(e.a, a), (e.b, b), (e.c, c)] {
            assert!((got - want).abs() <= 1e-6 * want.abs().max(1e-12) + 1e-15, "{got} vs {want}");
        }
    }
}

/// Bin minima sit near the true curve when the noise spread dominates the
/// rise of the cubic across one bin; that is the regime of pooled simulator
/// spread data.
#[test]
fn envelope_lies_below_noisy_samples() {
    let mut rng = Rng::seed_from_u64(8);
    let samples: Vec<(f64, f64)> = (0..4000)
        .map(|_| {
            let k: f64 = rng.gen_range(1.0..60.0);
            let noise = -20.0 * (1.0 - rng.gen::<f64>()).ln() + 1e-6;
            (k, -0.0002 * k.powi(3) + 0.01 * k * k + 0.8 * k + noise)
        })
        .collect();
    let e = fit_lower_envelope(&samples, 20).unwrap();
    let above = samples.iter().filter(|(k, g)| e.eval(*k) <= *g).count();
    assert!(above as f64 >= 0.95 * samples.len() as f64, "{above}");
}

#[test]
fn spread_matches_weighted_moments() {
    let mut rng = Rng::seed_from_u64(3);
    for _ in 0..200 {
        let c = rng.gen_range(1..12);
        let k: Vec<f64> = (0..c).map(|_| rng.gen_range(0.0..150.0)).collect();
        let l: Vec<f64> = (0..c).map(|_| rng.gen_range(0.2..3.0)).collect();
        let n: Vec<f64> = (0..c).map(|_| rng.gen_range(1..4) as f64).collect();
        let w: Vec<f64> = l.iter().zip(&n).map(|(a, b)| a * b).collect();
        let (gamma, mean) = spatial_spread(&k, &l, &n).unwrap();
        let (m2, g2) = weighted_moments(&k, &w);
        assert!((mean - m2).abs() <= 1e-12 * m2.abs().max(1.0));
        assert!((gamma - g2).abs() <= 1e-12 * g2.abs().max(1.0));
    }
}

#[test]
fn reinterpolation_factor_matches_dense_inverse() {
    let mut rng = Rng::seed_from_u64(12);
    let inputs: Vec<Vec<f64>> = (0..15).map(|_| vec![rng.gen(), rng.gen()]).collect();
    let y: Vec<f64> = inputs.iter().map(|x| branin_unit(x)).collect();
    let model = RKModel::with_hyperparameters(&inputs, &y, &[(0.0, 1.0), (0.0, 1.0)], &[3.0, 5.0], 0.05).unwrap();
    let (_, scale) = model.standardization();
    for _ in 0..20 {
        let u = [rng.gen::<f64>(), rng.gen::<f64>()];
        let p = model.predict_unit(&u);
        let oracle = model.sigma2_ri() * dense_ri_factor(model.design(), model.theta(), &u);
        assert!((p.ri_variance - oracle).abs() <= 1e-8 * model.sigma2_ri().max(scale * scale));
    }
}
