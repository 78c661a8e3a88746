use nfdtoll_core::ga::GAParams;
use nfdtoll_core::simnet::NetworkConfig;
use nfdtoll_core::surrogate::FitOptions;
use nfdtoll_core::tlp::*;
use nfdtoll_core::{Result, Rng, TollVector};
use rand::SeedableRng;

/// Quadratic bowl in the flat toll with a linear "heterogeneity" that grows
/// with the distance rate.
struct Bowl {
    calls: Vec<Vec<f64>>,
}

impl Evaluator for Bowl {
    fn evaluate(&mut self, toll: &TollVector) -> Result<Evaluation> {
        let x = toll.to_flat();
        self.calls.push(x.clone());
        let m = toll.intervals();
        let obj: f64 = x[..m].iter().map(|v| (v - 0.4).powi(2)).sum::<f64>()
            + x[m..].iter().map(|w| ((w - 6.0) / 15.0).powi(2)).sum::<f64>();
        let con: f64 = x[..m].iter().sum::<f64>() / m as f64;
        Ok(Evaluation {
            objective_reps: vec![obj],
            constraint_reps: vec![con],
            objective: obj,
            constraint: con,
            window_density: 25.0,
        })
    }
}

fn small_options() -> OptimizeOptions {
    let ga = GAParams {
        population_size: 20,
        generations: 15,
        ..GAParams::default()
    };
    OptimizeOptions {
        fit: FitOptions {
            ga: ga.clone(),
            ..FitOptions::default()
        },
        infill_ga: ga,
        ..OptimizeOptions::default()
    }
}

fn desk_spec(budget: usize) -> ProblemSpec {
    let mut spec = ProblemSpec::new(NetworkConfig::desk_preset()).unwrap();
    spec.budget = budget;
    spec
}

#[test]
fn single_objective_run_counts_and_invariants() {
    let spec = desk_spec(30);
    let mut ev = Bowl { calls: Vec::new() };
    let run = optimize(&spec, Method::RkEi, &mut ev, &small_options(), &mut Rng::seed_from_u64(3)).unwrap();
    assert_eq!(run.samples.len(), 30);
    assert_eq!(run.initial_samples(), 21);
    assert_eq!(run.infill_samples(), 9);
    assert_eq!(run.acquisition_history.len(), 9);
    assert!(run.constraint_model.is_none());
    assert!(run.samples.iter().all(|s| s.smoothing_feasible));
    assert!(run.incumbent_trace.windows(2).all(|w| w[1] <= w[0]));
    let best = run.best_sample().objective();
    assert!(run.samples.iter().all(|s| s.objective() >= best));
    // τ_min is in the initial plan, so the best is no worse than zero toll
    let zero = run.samples.iter().find(|s| s.toll.to_flat().iter().all(|v| *v == 0.0)).unwrap();
    assert!(best <= zero.objective());
}

#[test]
fn constrained_run_respects_the_limit() {
    let mut spec = desk_spec(30);
    spec.delta_max = Some(0.3);
    let mut ev = Bowl { calls: Vec::new() };
    let run = optimize(&spec, Method::RkEi, &mut ev, &small_options(), &mut Rng::seed_from_u64(4)).unwrap();
    assert!(run.constraint_model.is_some());
    assert!(run.best_feasible);
    assert!(run.best_sample().constraint() <= 0.3);
}

#[test]
fn budget_must_exceed_plan() {
    let spec = desk_spec(21);
    let mut ev = Bowl { calls: Vec::new() };
    let err = optimize(&spec, Method::RkEi, &mut ev, &small_options(), &mut Rng::seed_from_u64(0)).unwrap_err();
    assert!(err.to_string().contains("21"));
}

#[test]
fn direct_starts_at_center_and_may_overshoot() {
    let spec = desk_spec(60);
    let mut ev = Bowl { calls: Vec::new() };
    let run = optimize(&spec, Method::Direct, &mut ev, &small_options(), &mut Rng::seed_from_u64(0)).unwrap();
    assert_eq!(ev.calls[0], spec.bounds.midpoint());
    // the center is evaluated once and reused for the penalty scale
    assert_eq!(ev.calls.len(), run.samples.len());
    assert!(run.samples.len() >= 60);
    assert!(run.penalty_weight.unwrap() > 0.0);
    assert!(run.best_sample().smoothing_feasible);
    assert!(run.acquisition_history.is_empty());
}

#[test]
fn common_random_numbers_across_points() {
    let spec = desk_spec(40);
    let ev = SimulatorEvaluator::new(&spec, 77);
    let a = ev.simulate_all(&TollVector::zero(4)).unwrap();
    let b = ev.simulate_all(&TollVector::new(vec![0.2; 4], vec![3.0; 4]).unwrap()).unwrap();
    let seeds: Vec<u64> = (0..spec.replications).map(|r| ev.replication_seed(r)).collect();
    assert_eq!(seeds.len(), 2);
    assert_ne!(seeds[0], seeds[1]);
    // the demand before tolling starts is identical under shared seeds
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra.time_series[100], rb.time_series[100]);
    }
    assert_ne!(a[0].time_series[100], a[1].time_series[100]);
}

#[test]
fn bracket_reports_both_ends() {
    let spec = desk_spec(30);
    let mut ev = Bowl { calls: Vec::new() };
    let run = optimize(&spec, Method::RkEi, &mut ev, &small_options(), &mut Rng::seed_from_u64(3)).unwrap();
    let b = delta_max_bracket(&mut ev, &run).unwrap();
    assert_eq!(b.zero_toll, 0.0);
    assert!(b.contains(0.5 * (b.zero_toll + b.single_objective)));
}
