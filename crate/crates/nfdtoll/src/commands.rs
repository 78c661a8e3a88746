//! The six subcommands as library functions. Each returns a report whose
//! `Display` is what the binary prints.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nfdtoll_core::doe::build_initial_plan;
use nfdtoll_core::simnet::{fit_lower_envelope, simulate, Envelope, SimulationResult, DEFAULT_ENVELOPE_BINS};
use nfdtoll_core::stats::mix_seed;
use nfdtoll_core::surrogate::{CVRecord, ModelParts, RKModel};
use nfdtoll_core::tlp::{
    optimize, summarize, toll_table, DeltaMaxBracket, Evaluation, Evaluator, Method, OptimizationRun, ProblemSpec,
    SimulatorEvaluator,
};
use nfdtoll_core::{Result as CoreResult, Rng, TollVector};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::output::{self, Curve, SimulationSummary, TollJson};
use crate::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

// ---------------------------------------------------------------- simulate

pub struct SimulateReport {
    pub result: SimulationResult,
    pub k_cr: f64,
    pub dir: PathBuf,
}

impl fmt::Display for SimulateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.result;
        writeln!(f, "interval  K [veh/km/lane]  Delta [veh/km/lane]")?;
        for (h, (k, d)) in r.interval_density.iter().zip(&r.interval_deviation).enumerate() {
            let mark = if *k > self.k_cr { "  (above K_cr)" } else { "" };
            writeln!(f, "{:>8}  {:>16.3}  {:>19.3}{mark}", h + 1, k, d)?;
        }
        writeln!(f, "K_cr = {}; window density {:.3} veh/km/lane", self.k_cr, r.window_density())?;
        write!(f, "outputs in {}", self.dir.display())
    }
}

/// One simulation; writes `timeseries.csv` and `summary.json` to `dir`.
pub fn simulate_cmd(config: &Config, toll: &TollVector, seed: u64, dir: &Path) -> Result<SimulateReport, CliError> {
    let spec = config.problem_spec()?;
    if toll.intervals() != spec.intervals() {
        return Err(CliError::Usage(format!(
            "toll has {} intervals, config has m = {}",
            toll.intervals(),
            spec.intervals()
        )));
    }
    let result = simulate(&spec.config, toll, seed)?;
    create_dir(dir)?;
    output::write_timeseries_csv(&dir.join("timeseries.csv"), &result)?;
    output::write_json(&dir.join("summary.json"), &SimulationSummary::new(&result, toll, seed))?;
    Ok(SimulateReport {
        result,
        k_cr: spec.k_cr,
        dir: dir.to_path_buf(),
    })
}

// ---------------------------------------------------------------- optimize

/// Simulator evaluator that also writes every replication's time series.
pub struct RecordingEvaluator {
    pub inner: SimulatorEvaluator,
    pub dir: Option<PathBuf>,
    pub count: usize,
}

impl Evaluator for RecordingEvaluator {
    fn evaluate(&mut self, toll: &TollVector) -> CoreResult<Evaluation> {
        let results = self.inner.simulate_all(toll)?;
        self.count += 1;
        if let Some(dir) = &self.dir {
            for (r, res) in results.iter().enumerate() {
                let path = dir.join(format!("eval_{:04}_r{}.csv", self.count, r + 1));
                // a failed write must not be mistaken for a simulator failure
                if let Err(e) = output::write_timeseries_csv(&path, res) {
                    log::error!("{e}");
                }
            }
        }
        summarize(&results, self.inner.k_cr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub method: String,
    /// `single-objective` or `constrained`
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    pub master_seed: u64,
    /// SHA-256 of the canonical `config.toml`
    pub config_sha256: String,
    pub budget: usize,
    pub evaluations: usize,
    pub initial_samples: usize,
    pub infill_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty_weight: Option<f64>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestJson {
    /// 1-based row in samples.csv
    pub index: usize,
    pub toll: TollJson,
    pub objective: f64,
    pub constraint: f64,
    pub window_density: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartsJson {
    pub inputs: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
    pub input_box: Vec<(f64, f64)>,
    pub theta: Vec<f64>,
    pub lambda: f64,
}

impl From<&ModelParts> for PartsJson {
    fn from(p: &ModelParts) -> Self {
        PartsJson {
            inputs: p.inputs.clone(),
            responses: p.responses.clone(),
            input_box: p.input_box.clone(),
            theta: p.theta.clone(),
            lambda: p.lambda,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateJson {
    pub objective: PartsJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint: Option<PartsJson>,
}

#[derive(Debug, Clone)]
pub struct OptimizeRequest {
    pub method: Method,
    pub seed: u64,
    /// Write per-evaluation simulator CSVs under `sims/`.
    pub record_simulations: bool,
}

pub struct OptimizeReport {
    pub run: OptimizationRun,
    pub manifest: RunManifest,
    pub bracket: Option<DeltaMaxBracket>,
    pub dir: PathBuf,
}

impl fmt::Display for OptimizeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let run = &self.run;
        let best = run.best_sample();
        writeln!(
            f,
            "{} ({}): {} evaluations ({} initial, {} infill) against a budget of {}",
            self.manifest.method,
            self.manifest.mode,
            run.samples.len(),
            self.manifest.initial_samples,
            self.manifest.infill_samples,
            self.manifest.budget
        )?;
        if run.samples.len() > self.manifest.budget {
            writeln!(f, "DIRECT finished its last iteration: {} over budget", run.samples.len() - self.manifest.budget)?;
        }
        write!(f, "{}", toll_table(&best.toll))?;
        writeln!(
            f,
            "objective {:.4} veh/km/lane, constraint {:.4} veh/km/lane, window density {:.3} veh/km/lane{}",
            best.objective(),
            best.constraint(),
            best.evaluation.window_density,
            if run.best_feasible { "" } else { " (no feasible sample; least-violating shown)" }
        )?;
        if let Some(b) = &self.bracket {
            writeln!(
                f,
                "delta_max bracket: zero toll {:.4}, this optimum {:.4}; a limit strictly between them is informative",
                b.zero_toll, b.single_objective
            )?;
        }
        write!(f, "run directory {}", self.dir.display())
    }
}

/// Full optimization run writing its artifact directory to `dir`.
pub fn optimize_cmd(config: &Config, req: &OptimizeRequest, dir: &Path) -> Result<OptimizeReport, CliError> {
    let started = unix_now();
    let spec = config.problem_spec()?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let options = config.optimize_options()?;
    create_dir(dir)?;
    let sims = dir.join("sims");
    if req.record_simulations {
        create_dir(&sims)?;
    }
    output::write_text(&dir.join("config.toml"), &config.to_toml())?;
    let mut evaluator = RecordingEvaluator {
        inner: SimulatorEvaluator::new(&spec, req.seed),
        dir: req.record_simulations.then_some(sims),
        count: 0,
    };
    let mut rng = Rng::seed_from_u64(req.seed);
    let run = optimize(&spec, req.method, &mut evaluator, &options, &mut rng)?;

    output::write_samples_csv(&dir.join("samples.csv"), &run)?;
    output::write_history_csv(&dir.join("history.csv"), &run)?;
    if req.method == Method::RkEi {
        output::write_convergence_csv(&dir.join("convergence.csv"), &run)?;
    }
    if let Some(obj) = &run.objective_model {
        let s = SurrogateJson {
            objective: PartsJson::from(obj),
            constraint: run.constraint_model.as_ref().map(PartsJson::from),
        };
        output::write_json(&dir.join("surrogate.json"), &s)?;
    }
    let best = run.best_sample();
    output::write_json(
        &dir.join("best.json"),
        &BestJson {
            index: run.best + 1,
            toll: TollJson::from(&best.toll),
            objective: best.objective(),
            constraint: best.constraint(),
            window_density: best.evaluation.window_density,
            feasible: run.best_feasible,
        },
    )?;
    let bracket = match spec.delta_max {
        None => Some(bracket_for(&spec, &run, &evaluator.inner)?),
        Some(_) => None,
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "optimize".into(),
        method: req.method.label().into(),
        mode: if spec.delta_max.is_some() { "constrained" } else { "single-objective" }.into(),
        delta_max: spec.delta_max,
        master_seed: req.seed,
        config_sha256: config.digest(),
        budget: spec.budget,
        evaluations: run.samples.len(),
        initial_samples: run.initial_samples(),
        infill_samples: run.infill_samples(),
        penalty_weight: run.penalty_weight,
        started_unix: started,
        finished_unix: unix_now(),
    };
    output::write_json(&dir.join("run.json"), &manifest)?;
    Ok(OptimizeReport {
        run,
        manifest,
        bracket,
        dir: dir.to_path_buf(),
    })
}

/// Reuses the zero-toll sample when the run has one.
fn bracket_for(spec: &ProblemSpec, run: &OptimizationRun, sim: &SimulatorEvaluator) -> Result<DeltaMaxBracket, CliError> {
    let zero = match run.samples.iter().find(|s| s.toll.to_flat().iter().all(|x| *x == 0.0)) {
        Some(s) => s.constraint(),
        None => summarize(&sim.simulate_all(&TollVector::zero(spec.intervals()))?, spec.k_cr)?.constraint,
    };
    Ok(DeltaMaxBracket {
        zero_toll: zero,
        single_objective: run.best_sample().constraint(),
    })
}

// ---------------------------------------------------------------- validate

pub struct Outlier {
    pub index: usize,
    pub toll: Vec<f64>,
    pub residual: f64,
    /// `tau_min` or `tau_max` when the toll is a box corner
    pub corner: Option<&'static str>,
}

pub struct ValidateReport {
    pub records: Vec<CVRecord>,
    pub inside: usize,
    pub outliers: Vec<Outlier>,
}

impl ValidateReport {
    pub fn fraction_inside(&self) -> f64 {
        self.inside as f64 / self.records.len() as f64
    }
}

impl fmt::Display for ValidateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} of {} standardized LOO residuals inside [-3, 3] ({:.1}%)",
            self.inside,
            self.records.len(),
            100.0 * self.fraction_inside()
        )?;
        for o in &self.outliers {
            let tag = o.corner.map_or(String::new(), |c| format!(" [{c}]"));
            let toll: Vec<String> = o.toll.iter().map(|x| format!("{x:.4}")).collect();
            writeln!(f, "outlier sample {}: residual {:.3}{tag}; toll ({})", o.index, o.residual, toll.join(", "))?;
        }
        Ok(())
    }
}

/// Refits the objective surrogate on a run's samples and cross-validates it.
pub fn validate_cmd(run_dir: &Path) -> Result<ValidateReport, CliError> {
    let config = Config::load(&run_dir.join("config.toml"), crate::config::Preset::Default)?;
    let manifest: Option<RunManifest> =
        std::fs::read_to_string(run_dir.join("run.json")).ok().and_then(|t| serde_json::from_str(&t).ok());
    let samples = output::read_samples_csv(&run_dir.join("samples.csv"))?;
    if samples.len() < 3 {
        return Err(CliError::Runtime(format!("insufficient samples: {} (need at least 3)", samples.len())));
    }
    let spec = config.problem_spec()?;
    if samples[0].toll.len() != spec.bounds.dim() {
        return Err(CliError::Runtime(format!(
            "corrupt samples file: {} toll columns, config expects {}",
            samples[0].toll.len(),
            spec.bounds.dim()
        )));
    }
    let options = config.optimize_options()?;
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.toll.clone()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.objective).collect();
    let seed = mix_seed(manifest.map_or(0, |m| m.master_seed), u64::from(u32::MAX));
    let model = RKModel::fit(&inputs, &y, &spec.bounds.pairs(), &options.fit, &mut Rng::seed_from_u64(seed))?;
    Ok(cross_validate(&model, &spec))
}

pub fn cross_validate(model: &RKModel, spec: &ProblemSpec) -> ValidateReport {
    let records = match model.loo_cv() {
        Ok(r) => r,
        Err(_) => Vec::new(),
    };
    let ok = |r: &CVRecord| !r.degenerate && r.standardized_residual.abs() <= 3.0;
    let inside = records.iter().filter(|r| ok(r)).count();
    let outliers = records
        .iter()
        .filter(|r| !ok(r))
        .map(|r| {
            let toll = model.inputs()[r.index].clone();
            let corner = if toll == spec.bounds.lower {
                Some("tau_min")
            } else if toll == spec.bounds.upper {
                Some("tau_max")
            } else {
                None
            };
            Outlier {
                index: r.index + 1,
                toll,
                residual: r.standardized_residual,
                corner,
            }
        })
        .collect();
    ValidateReport {
        records,
        inside,
        outliers,
    }
}

// ---------------------------------------------------------------- compare

pub struct CompareReport {
    pub curves: Vec<Curve>,
    pub path: PathBuf,
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.curves {
            let last = c.trace.last().copied().unwrap_or(f64::NAN);
            writeln!(f, "{:<12} {:>5} evaluations, final incumbent {:.4} veh/km/lane", c.label, c.trace.len(), last)?;
        }
        write!(f, "curves written to {}", self.path.display())
    }
}

/// RK once per seed and DIRECT once, all against the simulator seeded with
/// the first seed so every curve sees the same replications.
pub fn compare_cmd(config: &Config, seeds: &[u64], path: &Path) -> Result<CompareReport, CliError> {
    let sim_seed = *seeds.first().ok_or_else(|| CliError::Usage("compare needs at least one seed".into()))?;
    let spec = config.problem_spec()?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let options = config.optimize_options()?;
    let mut curves = Vec::new();
    for &seed in seeds {
        let mut ev = SimulatorEvaluator::new(&spec, sim_seed);
        let run = optimize(&spec, Method::RkEi, &mut ev, &options, &mut Rng::seed_from_u64(seed))?;
        log::info!("rk seed {seed}: best {:.4}", run.best_sample().objective());
        curves.push(Curve {
            label: format!("rk-seed{seed}"),
            method: Method::RkEi,
            seed,
            trace: run.incumbent_trace,
        });
    }
    let mut ev = SimulatorEvaluator::new(&spec, sim_seed);
    let run = optimize(&spec, Method::Direct, &mut ev, &options, &mut Rng::seed_from_u64(sim_seed))?;
    curves.push(Curve {
        label: "direct".into(),
        method: Method::Direct,
        seed: sim_seed,
        trace: run.incumbent_trace,
    });
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    output::write_compare_csv(path, &curves)?;
    Ok(CompareReport {
        curves,
        path: path.to_path_buf(),
    })
}

// ---------------------------------------------------------------- envelope

pub struct EnvelopeReport {
    pub envelope: Envelope,
    pub samples: usize,
    pub fragment: String,
}

impl fmt::Display for EnvelopeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# fitted to {} pooled zero-toll (K, gamma) samples", self.samples)?;
        write!(f, "{}", self.fragment)
    }
}

/// Pools `(K, γ)` from `runs` zero-toll simulations (seeds
/// `mix_seed(seed, r)`) and fits the lower envelope.
pub fn envelope_cmd(config: &Config, runs: usize, seed: u64) -> Result<EnvelopeReport, CliError> {
    if runs == 0 {
        return Err(CliError::Usage("envelope needs at least one run".into()));
    }
    let spec = config.problem_spec()?;
    let zero = TollVector::zero(spec.intervals());
    let mut pooled = Vec::new();
    for r in 0..runs {
        pooled.extend(simulate(&spec.config, &zero, mix_seed(seed, r as u64))?.spread_samples());
    }
    let envelope = fit_lower_envelope(&pooled, DEFAULT_ENVELOPE_BINS)?;
    let fragment = format!(
        "[network.envelope]\na = {:?}\nb = {:?}\nc = {:?}\n",
        envelope.a, envelope.b, envelope.c
    );
    Ok(EnvelopeReport {
        envelope,
        samples: pooled.len(),
        fragment,
    })
}

// ---------------------------------------------------------------- doe

/// The initial plan `optimize --method rk --seed <seed>` evaluates, smoothing
/// repair included.
pub fn doe_cmd(config: &Config, seed: u64, path: &Path) -> Result<Vec<TollVector>, CliError> {
    let spec = config.problem_spec()?;
    let mut rng = Rng::seed_from_u64(seed);
    let mut plan = build_initial_plan(spec.intervals(), &spec.bounds, &mut rng)?;
    for t in &mut plan {
        let mut x = t.to_flat();
        spec.smoothing.repair(&mut x, &spec.bounds);
        *t = TollVector::from_flat(&x)?;
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    output::write_plan_csv(path, &plan)?;
    Ok(plan)
}
