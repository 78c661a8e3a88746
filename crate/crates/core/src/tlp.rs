//! Toll level problems: replication-averaged objective and constraint, the
//! smoothing check, and the optimization driver that runs either the kriging
//! infill loop or DIRECT against an [`Evaluator`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::direct::{direct_minimize, quadratic_penalty, BudgetPolicy, DirectOptions, DEFAULT_EPSILON};
use crate::doe::{build_initial_plan, initial_plan_size};
use crate::error::invalid;
use crate::ga::GAParams;
use crate::infill::{best_observed, propose_infill, AcquisitionContext};
use crate::simnet::{simulate, NetworkConfig, SimulationResult};
use crate::stats::mix_seed;
use crate::surrogate::{FitOptions, ModelParts, RKModel};
use crate::{Bounds, Error, Result, Rng, Smoothing, SmoothingViolation, TollVector};

/// Default number of simulator replications per evaluation.
pub const DEFAULT_REPLICATIONS: usize = 2;
/// Default total evaluation budget.
pub const DEFAULT_BUDGET: usize = 100;
/// Window of the convergence moving average.
pub const CONVERGENCE_WINDOW: usize = 4;

/// One toll level problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub config: NetworkConfig,
    pub bounds: Bounds,
    pub smoothing: Smoothing,
    /// Target network density (veh/km/lane).
    pub k_cr: f64,
    /// Limit on the mean deviation from spread; present means the constrained
    /// problem.
    pub delta_max: Option<f64>,
    pub replications: usize,
    /// Total number of evaluations, initial plan included.
    pub budget: usize,
}

impl ProblemSpec {
    /// Single-objective problem on `config` with rate bounds `[0, 1]`
    /// currency/km and `[0, 15]` currency/h and smoothing limits of a third of
    /// each range.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let m = config.intervals();
        let bounds = Bounds::uniform(m, 1.0, 15.0)?;
        let smoothing = Smoothing::new(1.0 / 3.0, 5.0)?;
        let k_cr = config.k_cr;
        Ok(ProblemSpec {
            config,
            bounds,
            smoothing,
            k_cr,
            delta_max: None,
            replications: DEFAULT_REPLICATIONS,
            budget: DEFAULT_BUDGET,
        })
    }

    pub fn intervals(&self) -> usize {
        self.config.intervals()
    }

    /// Size of the initial sample plan, `2(2m + 1) + 3`.
    pub fn initial_plan_size(&self) -> usize {
        initial_plan_size(self.intervals())
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let m = self.intervals();
        if self.bounds.intervals() != m {
            return Err(invalid(format!(
                "bounds cover {} intervals, the network configuration has {m}",
                self.bounds.intervals()
            )));
        }
        if self.bounds.lower.iter().any(|l| *l < 0.0) {
            return Err(invalid("toll bounds must be ≥ 0"));
        }
        if !(self.smoothing.alpha > 0.0 && self.smoothing.beta > 0.0) {
            return Err(invalid("smoothing limits alpha and beta must be > 0"));
        }
        if !(self.k_cr > 0.0 && self.k_cr.is_finite()) {
            return Err(invalid("k_cr must be positive"));
        }
        if let Some(d) = self.delta_max {
            if !d.is_finite() {
                return Err(invalid("delta_max must be finite"));
            }
        }
        if self.replications == 0 {
            return Err(invalid("replications must be ≥ 1"));
        }
        let plan = self.initial_plan_size();
        if self.budget <= plan {
            return Err(invalid(format!(
                "budget {} must exceed the initial plan size {plan}",
                self.budget
            )));
        }
        Ok(())
    }
}

/// `(1/m) Σ_h |K̄_h − K_cr|` averaged over replications.
pub fn objective_value(results: &[SimulationResult], k_cr: f64) -> Result<f64> {
    replication_mean(results, |r| {
        r.interval_density.iter().map(|k| (k - k_cr).abs()).sum::<f64>() / r.interval_density.len() as f64
    })
}

/// `(1/m) Σ_h Δ̄_h` averaged over replications.
pub fn constraint_value(results: &[SimulationResult]) -> Result<f64> {
    replication_mean(results, |r| {
        r.interval_deviation.iter().sum::<f64>() / r.interval_deviation.len() as f64
    })
}

fn replication_mean(results: &[SimulationResult], f: impl Fn(&SimulationResult) -> f64) -> Result<f64> {
    let first = results.first().ok_or_else(|| invalid("need at least one replication"))?;
    let m = first.interval_density.len();
    if m == 0 || results.iter().any(|r| r.interval_density.len() != m || r.interval_deviation.len() != m) {
        return Err(invalid("replications must share the same nonzero number of intervals"));
    }
    Ok(results.iter().map(f).sum::<f64>() / results.len() as f64)
}

/// Smoothing verdict with the violated constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingCheck {
    pub feasible: bool,
    pub violations: Vec<SmoothingViolation>,
}

/// Checks `|v_h − v_{h+1}| ≤ α` and `|ω_h − ω_{h+1}| ≤ β` for every pair of
/// adjacent intervals.
pub fn check_smoothing(toll: &TollVector, smoothing: &Smoothing) -> SmoothingCheck {
    let violations = smoothing.violations(toll);
    SmoothingCheck {
        feasible: violations.is_empty(),
        violations,
    }
}

/// Replication-averaged outcome of one toll vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective_reps: Vec<f64>,
    pub constraint_reps: Vec<f64>,
    pub objective: f64,
    pub constraint: f64,
    /// Mean network density over the tolling window, averaged over
    /// replications.
    pub window_density: f64,
}

/// The expensive black box.
pub trait Evaluator {
    fn evaluate(&mut self, toll: &TollVector) -> Result<Evaluation>;
}

/// Runs the simulator with common random numbers: replication `r` of every
/// toll vector uses the seed `mix_seed(master_seed, r)`.
#[derive(Debug, Clone)]
pub struct SimulatorEvaluator {
    pub config: NetworkConfig,
    pub k_cr: f64,
    pub replications: usize,
    pub master_seed: u64,
}

impl SimulatorEvaluator {
    pub fn new(spec: &ProblemSpec, master_seed: u64) -> Self {
        SimulatorEvaluator {
            config: spec.config.clone(),
            k_cr: spec.k_cr,
            replications: spec.replications,
            master_seed,
        }
    }

    pub fn replication_seed(&self, r: usize) -> u64 {
        mix_seed(self.master_seed, r as u64)
    }

    /// Every replication's full simulator output.
    pub fn simulate_all(&self, toll: &TollVector) -> Result<Vec<SimulationResult>> {
        (0..self.replications)
            .map(|r| simulate(&self.config, toll, self.replication_seed(r)))
            .collect()
    }
}

impl Evaluator for SimulatorEvaluator {
    fn evaluate(&mut self, toll: &TollVector) -> Result<Evaluation> {
        summarize(&self.simulate_all(toll)?, self.k_cr)
    }
}

/// Objective and constraint of one toll vector from its replications.
pub fn summarize(results: &[SimulationResult], k_cr: f64) -> Result<Evaluation> {
    let objective_reps: Vec<f64> = results
        .iter()
        .map(|r| objective_value(core::slice::from_ref(r), k_cr))
        .collect::<Result<_>>()?;
    let constraint_reps: Vec<f64> = results
        .iter()
        .map(|r| constraint_value(core::slice::from_ref(r)))
        .collect::<Result<_>>()?;
    Ok(Evaluation {
        objective: objective_value(results, k_cr)?,
        constraint: constraint_value(results)?,
        window_density: results.iter().map(|r| r.window_density()).sum::<f64>() / results.len() as f64,
        objective_reps,
        constraint_reps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Regressing kriging with expected-improvement infill.
    RkEi,
    Direct,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::RkEi => "rk",
            Method::Direct => "direct",
        }
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleOrigin {
    InitialPlan,
    Infill,
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub toll: TollVector,
    pub evaluation: Evaluation,
    pub origin: SampleOrigin,
    /// Acquisition value at proposal time (infill samples only).
    pub acquisition: Option<f64>,
    /// The infill fell back to a space-filling point.
    pub space_filling: bool,
    pub smoothing_feasible: bool,
}

impl SampleRecord {
    pub fn objective(&self) -> f64 {
        self.evaluation.objective
    }

    pub fn constraint(&self) -> f64 {
        self.evaluation.constraint
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationRun {
    pub method: Method,
    pub samples: Vec<SampleRecord>,
    /// Index of the best sample.
    pub best: usize,
    /// `false` when no sample met every constraint; `best` then has the
    /// smallest constraint value among smoothing-feasible samples.
    pub best_feasible: bool,
    /// Acquisition value of every infill iteration.
    pub acquisition_history: Vec<f64>,
    /// Best feasible objective after each evaluation (`+∞` before the first
    /// feasible sample).
    pub incumbent_trace: Vec<f64>,
    /// Objective surface of the last infill iteration.
    pub objective_model: Option<ModelParts>,
    /// Constraint surface of the last infill iteration.
    pub constraint_model: Option<ModelParts>,
    /// DIRECT penalty weight.
    pub penalty_weight: Option<f64>,
}

impl OptimizationRun {
    pub fn best_sample(&self) -> &SampleRecord {
        &self.samples[self.best]
    }

    /// Number of initial-plan samples.
    pub fn initial_samples(&self) -> usize {
        self.samples.iter().filter(|s| s.origin == SampleOrigin::InitialPlan).count()
    }

    /// Number of infill samples.
    pub fn infill_samples(&self) -> usize {
        self.samples.iter().filter(|s| s.origin == SampleOrigin::Infill).count()
    }
}

/// Solver settings shared by both methods.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub fit: FitOptions,
    pub infill_ga: GAParams,
    pub direct_epsilon: f64,
    /// DIRECT penalty weight as a multiple of `|f|` at the box center.
    pub penalty_scale: f64,
    pub direct_budget: BudgetPolicy,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            fit: FitOptions::default(),
            infill_ga: GAParams::default(),
            direct_epsilon: DEFAULT_EPSILON,
            penalty_scale: 1e3,
            direct_budget: BudgetPolicy::CompleteIteration,
        }
    }
}

fn is_feasible(sample: &SampleRecord, delta_max: Option<f64>) -> bool {
    sample.smoothing_feasible && delta_max.map_or(true, |d| sample.constraint() <= d)
}

fn select_best(samples: &[SampleRecord], delta_max: Option<f64>) -> (usize, bool) {
    let pick = |pred: &dyn Fn(&SampleRecord) -> bool, key: &dyn Fn(&SampleRecord) -> f64| {
        samples
            .iter()
            .enumerate()
            .filter(|(_, s)| pred(s))
            .min_by(|a, b| key(a.1).total_cmp(&key(b.1)))
            .map(|(i, _)| i)
    };
    if let Some(i) = pick(&|s| is_feasible(s, delta_max), &|s| s.objective()) {
        return (i, true);
    }
    let i = pick(&|s| s.smoothing_feasible, &|s| s.constraint())
        .or_else(|| pick(&|_| true, &|s| s.objective()))
        .unwrap_or(0);
    (i, false)
}

fn incumbent_trace(samples: &[SampleRecord], delta_max: Option<f64>) -> Vec<f64> {
    let mut best = f64::INFINITY;
    samples
        .iter()
        .map(|s| {
            if is_feasible(s, delta_max) && s.objective() < best {
                best = s.objective();
            }
            best
        })
        .collect()
}

/// Solves the problem in `spec` with `method`, spending at most
/// `spec.budget` evaluations (DIRECT may overshoot by one iteration under
/// [`BudgetPolicy::CompleteIteration`]).
pub fn optimize(
    spec: &ProblemSpec,
    method: Method,
    evaluator: &mut dyn Evaluator,
    options: &OptimizeOptions,
    rng: &mut Rng,
) -> Result<OptimizationRun> {
    spec.validate()?;
    match method {
        Method::RkEi => optimize_rk(spec, evaluator, options, rng),
        Method::Direct => optimize_direct(spec, evaluator, options),
    }
}

fn record(spec: &ProblemSpec, toll: TollVector, evaluation: Evaluation, origin: SampleOrigin) -> SampleRecord {
    let smoothing_feasible = spec.smoothing.is_feasible(&toll) && spec.bounds.contains(&toll.to_flat());
    SampleRecord {
        toll,
        evaluation,
        origin,
        acquisition: None,
        space_filling: false,
        smoothing_feasible,
    }
}

fn optimize_rk(
    spec: &ProblemSpec,
    evaluator: &mut dyn Evaluator,
    options: &OptimizeOptions,
    rng: &mut Rng,
) -> Result<OptimizationRun> {
    let m = spec.intervals();
    let mut samples = Vec::with_capacity(spec.budget);
    for toll in build_initial_plan(m, &spec.bounds, rng)? {
        let mut x = toll.to_flat();
        spec.smoothing.repair(&mut x, &spec.bounds);
        let toll = TollVector::from_flat(&x)?;
        let e = evaluator.evaluate(&toll)?;
        samples.push(record(spec, toll, e, SampleOrigin::InitialPlan));
    }
    let input_box = spec.bounds.pairs();
    let mut acquisition_history = Vec::new();
    let mut objective_model = None;
    let mut constraint_model = None;
    while samples.len() < spec.budget {
        let inputs: Vec<Vec<f64>> = samples.iter().map(|s: &SampleRecord| s.toll.to_flat()).collect();
        let objectives: Vec<f64> = samples.iter().map(|s| s.objective()).collect();
        let constraints: Vec<f64> = samples.iter().map(|s| s.constraint()).collect();
        let obj = RKModel::fit(&inputs, &objectives, &input_box, &options.fit, rng)?;
        let con = match spec.delta_max {
            Some(_) => Some(RKModel::fit(&inputs, &constraints, &input_box, &options.fit, rng)?),
            None => None,
        };
        let y_min = best_observed(&objectives, spec.delta_max.map(|d| (constraints.as_slice(), d)));
        let ctx = AcquisitionContext {
            obj_model: &obj,
            constraint: con.as_ref().zip(spec.delta_max),
            y_min,
            bounds: &spec.bounds,
            smoothing: Some(spec.smoothing),
        };
        let proposal = propose_infill(&ctx, &options.infill_ga, rng)?;
        let toll = TollVector::from_flat(&proposal.point)?;
        let e = evaluator.evaluate(&toll)?;
        let mut rec = record(spec, toll, e, SampleOrigin::Infill);
        rec.acquisition = Some(proposal.acquisition);
        rec.space_filling = proposal.space_filling;
        log::debug!(
            "infill {}: acquisition {:.3e}, objective {:.4}",
            samples.len() + 1,
            proposal.acquisition,
            rec.objective()
        );
        samples.push(rec);
        acquisition_history.push(proposal.acquisition);
        objective_model = Some(obj.to_parts());
        constraint_model = con.map(|c| c.to_parts());
    }
    let (best, best_feasible) = select_best(&samples, spec.delta_max);
    Ok(OptimizationRun {
        method: Method::RkEi,
        incumbent_trace: incumbent_trace(&samples, spec.delta_max),
        samples,
        best,
        best_feasible,
        acquisition_history,
        objective_model,
        constraint_model,
        penalty_weight: None,
    })
}

fn optimize_direct(spec: &ProblemSpec, evaluator: &mut dyn Evaluator, options: &OptimizeOptions) -> Result<OptimizationRun> {
    if !(options.penalty_scale > 0.0) {
        return Err(invalid("penalty_scale must be > 0"));
    }
    let center = TollVector::from_flat(&spec.bounds.midpoint())?;
    let center_eval = evaluator.evaluate(&center)?;
    let rho = options.penalty_scale * if center_eval.objective != 0.0 { center_eval.objective.abs() } else { 1.0 };

    let mut samples: Vec<SampleRecord> = Vec::with_capacity(spec.budget);
    let mut cached = Some(center_eval);
    let mut failure: Option<Error> = None;
    let mut direct_opts = DirectOptions::new(spec.budget);
    direct_opts.epsilon = options.direct_epsilon;
    direct_opts.budget = options.direct_budget;
    let penalized = |x: &[f64]| -> f64 {
        if failure.is_some() {
            return f64::NAN;
        }
        let toll = match TollVector::from_flat(x) {
            Ok(t) => t,
            Err(e) => {
                failure = Some(e);
                return f64::NAN;
            }
        };
        let e = match cached.take() {
            Some(e) => e,
            None => match evaluator.evaluate(&toll) {
                Ok(e) => e,
                Err(err) => {
                    failure = Some(err);
                    return f64::NAN;
                }
            },
        };
        let mut excess = spec.smoothing.excesses(x);
        if let Some(d) = spec.delta_max {
            excess.push(e.constraint - d);
        }
        let g = e.objective + quadratic_penalty(excess, rho);
        samples.push(record(spec, toll, e, SampleOrigin::Direct));
        g
    };
    // degenerate bound dimensions are fixed rather than searched
    let pairs = spec.bounds.pairs();
    let free: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].1 > pairs[i].0).collect();
    if free.is_empty() {
        return Err(invalid("DIRECT needs at least one bound with lower < upper"));
    }
    let full = spec.bounds.midpoint();
    let mut penalized = penalized;
    let sub_box: Vec<(f64, f64)> = free.iter().map(|&i| pairs[i]).collect();
    direct_minimize(
        |z: &[f64]| {
            let mut x = full.clone();
            for (k, &i) in free.iter().enumerate() {
                x[i] = z[k];
            }
            penalized(&x)
        },
        &sub_box,
        &direct_opts,
    )?;
    drop(penalized);
    if let Some(e) = failure {
        return Err(e);
    }
    let (best, best_feasible) = select_best(&samples, spec.delta_max);
    Ok(OptimizationRun {
        method: Method::Direct,
        incumbent_trace: incumbent_trace(&samples, spec.delta_max),
        samples,
        best,
        best_feasible,
        acquisition_history: Vec::new(),
        objective_model: None,
        constraint_model: None,
        penalty_weight: Some(rho),
    })
}

/// Raw acquisition values and their averages over consecutive
/// non-overlapping windows; a trailing partial window is averaged as is.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceHistory {
    pub raw: Vec<f64>,
    pub averaged: Vec<f64>,
}

pub fn convergence_history(values: &[f64]) -> ConvergenceHistory {
    ConvergenceHistory {
        raw: values.to_vec(),
        averaged: values
            .chunks(CONVERGENCE_WINDOW)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect(),
    }
}

/// Constraint values that bracket a sensible `Δ_max`: tolling usually raises
/// heterogeneity, so a useful limit lies between the zero-toll value and the
/// value at the single-objective optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaMaxBracket {
    pub zero_toll: f64,
    pub single_objective: f64,
}

impl DeltaMaxBracket {
    /// Whether `delta_max` lies strictly between the two values.
    pub fn contains(&self, delta_max: f64) -> bool {
        let (lo, hi) = if self.zero_toll <= self.single_objective {
            (self.zero_toll, self.single_objective)
        } else {
            (self.single_objective, self.zero_toll)
        };
        lo < delta_max && delta_max < hi
    }
}

/// Evaluates the zero toll and reads the constraint of the single-objective
/// optimum from `single_run`.
pub fn delta_max_bracket(evaluator: &mut dyn Evaluator, single_run: &OptimizationRun) -> Result<DeltaMaxBracket> {
    let m = single_run.best_sample().toll.intervals();
    let zero = evaluator.evaluate(&TollVector::zero(m))?;
    Ok(DeltaMaxBracket {
        zero_toll: zero.constraint,
        single_objective: single_run.best_sample().constraint(),
    })
}

/// Formats the best toll as an `m × 2` table of `(v_h, ω_h)`.
pub fn toll_table(toll: &TollVector) -> String {
    let mut s = String::from("interval  v [currency/km]  omega [currency/h]\n");
    for h in 0..toll.intervals() {
        let (v, w) = toll.rates(h);
        s.push_str(&format!("{:>8}  {:>15.4}  {:>18.4}\n", h + 1, v, w));
    }
    s
}
