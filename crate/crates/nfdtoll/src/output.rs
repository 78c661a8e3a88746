//! CSV and JSON artifacts. Every numeric CSV column names its unit in
//! brackets, except the plan export, which keeps the bare `v_h,w_h` header.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nfdtoll_core::simnet::SimulationResult;
use nfdtoll_core::tlp::{convergence_history, Method, OptimizationRun, SampleOrigin};
use nfdtoll_core::TollVector;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DENSITY: &str = "veh/km/lane";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

/// Shortest text that reads back to the same `f64`; empty for non-finite.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn toll_headers(m: usize) -> Vec<String> {
    (1..=m)
        .map(|h| format!("v_{h} [currency/km]"))
        .chain((1..=m).map(|h| format!("w_{h} [currency/h]")))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Plan export with header `v_1..v_m,w_1..w_m`.
pub fn write_plan_csv(path: &Path, plan: &[TollVector]) -> Result<(), CliError> {
    let m = plan.first().map_or(0, |t| t.intervals());
    let mut w = writer(path)?;
    let header: Vec<String> = (1..=m).map(|h| format!("v_{h}")).chain((1..=m).map(|h| format!("w_{h}"))).collect();
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for t in plan {
        w.write_record(t.to_flat().iter().map(|x| num(*x))).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One row per simulation step, the initial state included.
pub fn write_timeseries_csv(path: &Path, result: &SimulationResult) -> Result<(), CliError> {
    let cells = result.time_series.first().map_or(0, |s| s.cell_density.len());
    let mut header: Vec<String> = [
        "t [h]",
        "K [veh/km/lane]",
        "gamma [veh/km/lane]",
        "Delta [veh/km/lane]",
        "flow [veh/h/lane]",
        "speed [km/h]",
        "queue [veh]",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=cells).map(|i| format!("k_{i} [veh/km/lane]")));
    header.push("pz_share [1]".into());
    let mut w = writer(path)?;
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for s in &result.time_series {
        let mut row = vec![num(s.t), num(s.k_net), num(s.gamma), num(s.delta), num(s.flow), num(s.speed), num(s.queue)];
        row.extend(s.cell_density.iter().map(|k| num(*k)));
        row.push(num(s.pz_share));
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TollJson {
    /// currency/km
    pub distance_rates: Vec<f64>,
    /// currency/h
    pub delay_rates: Vec<f64>,
}

impl From<&TollVector> for TollJson {
    fn from(t: &TollVector) -> Self {
        TollJson {
            distance_rates: t.distance_rates.clone(),
            delay_rates: t.delay_rates.clone(),
        }
    }
}

/// Per-run summary of one simulation; densities in veh/km/lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub toll: TollJson,
    pub interval_density: Vec<f64>,
    pub interval_deviation: Vec<f64>,
    pub window_density: f64,
    /// min/km
    pub pz_avg_travel_time: f64,
    /// min/km
    pub net_avg_travel_time: f64,
    /// currency
    pub toll_revenue: f64,
    /// veh
    pub pz_inflow_window: f64,
}

impl SimulationSummary {
    pub fn new(result: &SimulationResult, toll: &TollVector, seed: u64) -> Self {
        SimulationSummary {
            seed,
            toll: TollJson::from(toll),
            interval_density: result.interval_density.clone(),
            interval_deviation: result.interval_deviation.clone(),
            window_density: result.window_density(),
            pz_avg_travel_time: result.pz_avg_travel_time,
            net_avg_travel_time: result.net_avg_travel_time,
            toll_revenue: result.toll_revenue,
            pz_inflow_window: result.pz_inflow_window,
        }
    }
}

fn origin_label(o: SampleOrigin) -> &'static str {
    match o {
        SampleOrigin::InitialPlan => "initial",
        SampleOrigin::Infill => "infill",
        SampleOrigin::Direct => "direct",
    }
}

/// Toll, per-replication and mean objective and constraint of every sample.
pub fn write_samples_csv(path: &Path, run: &OptimizationRun) -> Result<(), CliError> {
    let m = run.samples.first().map_or(0, |s| s.toll.intervals());
    let reps = run.samples.first().map_or(0, |s| s.evaluation.objective_reps.len());
    let mut header = vec!["index".to_string(), "origin".to_string()];
    header.extend(toll_headers(m));
    header.extend((1..=reps).map(|r| format!("objective_r{r} [{DENSITY}]")));
    header.push(format!("objective [{DENSITY}]"));
    header.extend((1..=reps).map(|r| format!("constraint_r{r} [{DENSITY}]")));
    header.push(format!("constraint [{DENSITY}]"));
    header.push(format!("window_density [{DENSITY}]"));
    header.push(format!("acquisition [{DENSITY}]"));
    header.push("space_filling".into());
    header.push("smoothing_feasible".into());
    let mut w = writer(path)?;
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for (i, s) in run.samples.iter().enumerate() {
        let e = &s.evaluation;
        let mut row = vec![(i + 1).to_string(), origin_label(s.origin).to_string()];
        row.extend(s.toll.to_flat().iter().map(|x| num(*x)));
        row.extend(e.objective_reps.iter().map(|x| num(*x)));
        row.push(num(e.objective));
        row.extend(e.constraint_reps.iter().map(|x| num(*x)));
        row.push(num(e.constraint));
        row.push(num(e.window_density));
        row.push(s.acquisition.map_or(String::new(), num));
        row.push(s.space_filling.to_string());
        row.push(s.smoothing_feasible.to_string());
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Toll, mean objective and mean constraint read back from `samples.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSample {
    pub toll: Vec<f64>,
    pub objective: f64,
    pub constraint: f64,
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<StoredSample>, CliError> {
    let corrupt = |msg: String| CliError::Runtime(format!("corrupt samples file {}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| corrupt(e.to_string()))?;
    let header = r.headers().map_err(|e| corrupt(e.to_string()))?.clone();
    let name = |h: &str| h.split(" [").next().unwrap_or(h).to_string();
    let names: Vec<String> = header.iter().map(name).collect();
    let find = |key: &str| names.iter().position(|n| n == key).ok_or_else(|| corrupt(format!("missing column `{key}`")));
    let v_cols: Vec<usize> = (1..).map_while(|h| names.iter().position(|n| *n == format!("v_{h}"))).collect();
    let w_cols: Vec<usize> = (1..).map_while(|h| names.iter().position(|n| *n == format!("w_{h}"))).collect();
    if v_cols.is_empty() || v_cols.len() != w_cols.len() {
        return Err(corrupt("toll columns v_h / w_h missing or unbalanced".into()));
    }
    let obj = find("objective")?;
    let con = find("constraint")?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| corrupt(e.to_string()))?;
        let field = |j: usize| -> Result<f64, CliError> {
            let s = rec.get(j).unwrap_or("");
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| corrupt(format!("row {}: `{s}` in column `{}`", line + 1, names[j])))
        };
        let toll = v_cols.iter().chain(&w_cols).map(|&j| field(j)).collect::<Result<Vec<_>, _>>()?;
        out.push(StoredSample {
            toll,
            objective: field(obj)?,
            constraint: field(con)?,
        });
    }
    Ok(out)
}

/// Acquisition per infill iteration with its window average on the last row
/// of each window, plus the incumbent objective after that evaluation.
pub fn write_convergence_csv(path: &Path, run: &OptimizationRun) -> Result<(), CliError> {
    let initial = run.initial_samples();
    let conv = convergence_history(&run.acquisition_history);
    let window = nfdtoll_core::tlp::CONVERGENCE_WINDOW;
    let mut w = writer(path)?;
    w.write_record([
        "iteration".to_string(),
        format!("acquisition [{DENSITY}]"),
        format!("acquisition_window_mean [{DENSITY}]"),
        format!("best_objective [{DENSITY}]"),
    ])
    .map_err(|e| io_err(path, e))?;
    let n = conv.raw.len();
    for (i, a) in conv.raw.iter().enumerate() {
        let closes_window = (i + 1) % window == 0 || i + 1 == n;
        let mean = if closes_window { num(conv.averaged[i / window]) } else { String::new() };
        let best = run.incumbent_trace.get(initial + i).copied().unwrap_or(f64::NAN);
        w.write_record([(i + 1).to_string(), num(*a), mean, num(best)]).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Incumbent after each evaluation; empty until the first feasible sample.
pub fn write_history_csv(path: &Path, run: &OptimizationRun) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["evals".to_string(), format!("best_value [{DENSITY}]")]).map_err(|e| io_err(path, e))?;
    for (i, b) in run.incumbent_trace.iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(*b)]).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One incumbent-vs-evaluations curve of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub method: Method,
    pub seed: u64,
    pub trace: Vec<f64>,
}

/// Long format: one row per (curve, evaluation).
pub fn write_compare_csv(path: &Path, curves: &[Curve]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record([
        "label".to_string(),
        "method".to_string(),
        "seed".to_string(),
        "evals".to_string(),
        format!("best_value [{DENSITY}]"),
    ])
    .map_err(|e| io_err(path, e))?;
    for c in curves {
        for (i, b) in c.trace.iter().enumerate() {
            w.write_record([c.label.clone(), c.method.label().to_string(), c.seed.to_string(), (i + 1).to_string(), num(*b)])
                .map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads back the labels of a comparison CSV in first-seen order.
pub fn compare_labels(path: &Path) -> Result<Vec<String>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut labels: Vec<String> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let l = rec.get(0).unwrap_or("").to_string();
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    Ok(labels)
}

