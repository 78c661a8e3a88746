use std::path::Path;
use std::process::{Command, Output};

use nfdtoll::commands::{envelope_cmd, RunManifest};
use nfdtoll::config::{Config, Preset};
use nfdtoll::output::compare_labels;

/// Small inner GAs; evaluation counts do not depend on them.
const FAST_SOLVER: &str = "
[solver.fit_ga]
population_size = 16
generations = 8
[solver.infill_ga]
population_size = 16
generations = 8
";

fn nfdtoll(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfdtoll"))
        .args(args)
        .env("NFDTOLL_OUT", out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, preset: &str, extra: &str) -> String {
    let path = dir.join(format!("{preset}.toml"));
    std::fs::write(&path, format!("preset = \"{preset}\"\n{FAST_SOLVER}{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

#[test]
fn simulate_is_byte_reproducible_and_reports_congestion() {
    let tmp = tempfile::tempdir().unwrap();
    let (da, db) = (tmp.path().join("a"), tmp.path().join("b"));
    let a = nfdtoll(&["simulate", "--seed", "7", "--output", da.to_str().unwrap()], tmp.path());
    let b = nfdtoll(&["simulate", "--seed", "7", "--output", db.to_str().unwrap()], tmp.path());
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(b.status.success());
    for f in ["timeseries.csv", "summary.json"] {
        assert_eq!(std::fs::read(da.join(f)).unwrap(), std::fs::read(db.join(f)).unwrap(), "{f}");
    }
    // zero toll on the default preset: the last intervals sit above K_cr
    let text = stdout(&a);
    let rows: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows[6..].iter().all(|l| l.contains("above K_cr")), "{text}");
}

#[test]
fn default_output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nfdtoll(&["--preset", "desk", "simulate", "--seed", "2"], tmp.path());
    assert!(o.status.success());
    assert!(tmp.path().join("simulate-seed2/timeseries.csv").exists());
    let header = std::fs::read_to_string(tmp.path().join("simulate-seed2/timeseries.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.starts_with("t [h],K [veh/km/lane],gamma [veh/km/lane],Delta [veh/km/lane]"), "{header}");
    assert!(header.split(',').all(|c| c.contains('[')), "{header}");
}

#[test]
fn missing_config_exits_2_with_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nfdtoll(&["--config", "/no/such/nfdtoll.toml", "simulate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/nfdtoll.toml"));
}

#[test]
fn malformed_config_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "[network]\nvtt = \"cheap\"\n").unwrap();
    let o = nfdtoll(&["--config", path.to_str().unwrap(), "simulate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("network.vtt"), "{}", stderr(&o));
}

#[test]
fn bad_flags_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nfdtoll(&["optimize", "--method", "newton"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = nfdtoll(&["--preset", "desk", "simulate", "--toll", "0.1,0.2"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("8 values"));
}

#[test]
fn print_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nfdtoll(&["--preset", "restricted", "--print-config"], tmp.path());
    assert!(o.status.success());
    let back = Config::from_toml_str(&stdout(&o), Preset::Default).unwrap();
    assert_eq!(back, Config::preset(Preset::Restricted));
}

#[test]
fn budget_below_plan_reports_the_plan_size() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nfdtoll(&["optimize", "--budget", "30"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("37"), "{}", stderr(&o));
}

#[test]
fn rk_on_the_default_preset_logs_plan_and_infill_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "default", "");
    let o = nfdtoll(&["--config", &cfg, "optimize", "--budget", "100", "--no-sims", "--seed", "5"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&tmp.path().join("optimize-rk-seed5"));
    assert_eq!((m.initial_samples, m.infill_samples, m.evaluations), (37, 63, 100));
    assert_eq!(m.mode, "single-objective");
    assert_eq!(m.delta_max, None);
    assert!(stdout(&o).contains("37 initial, 63 infill"));
}

#[test]
fn direct_may_finish_its_last_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nfdtoll(&["optimize", "--method", "direct", "--budget", "100", "--no-sims"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&tmp.path().join("optimize-direct-seed0"));
    assert!(m.evaluations >= 100);
    assert!(m.penalty_weight.unwrap() > 0.0);
    if m.evaluations > 100 {
        assert!(stdout(&o).contains("over budget"));
    }
    let hist = std::fs::read_to_string(tmp.path().join("optimize-direct-seed0/history.csv")).unwrap();
    assert_eq!(hist.lines().count(), m.evaluations + 1);
}

#[test]
fn optimize_reruns_match_modulo_timestamps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "desk", "");
    let args = |out: &str| {
        vec![
            "--config".to_string(),
            cfg.clone(),
            "optimize".into(),
            "--budget".into(),
            "25".into(),
            "--delta-max".into(),
            "0.8".into(),
            "--seed".into(),
            "9".into(),
            "--output".into(),
            tmp.path().join(out).to_string_lossy().into_owned(),
        ]
    };
    for out in ["r1", "r2"] {
        let a = args(out);
        let o = nfdtoll(&a.iter().map(String::as_str).collect::<Vec<_>>(), tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (d1, d2) = (tmp.path().join("r1"), tmp.path().join("r2"));
    let mut files: Vec<String> = std::fs::read_dir(&d1)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|f| f != "run.json" && f != "sims")
        .collect();
    files.sort();
    for f in ["samples.csv", "convergence.csv", "best.json", "config.toml", "surrogate.json", "history.csv"] {
        assert!(files.contains(&f.to_string()), "{f} missing");
    }
    for f in &files {
        assert_eq!(std::fs::read(d1.join(f)).unwrap(), std::fs::read(d2.join(f)).unwrap(), "{f}");
    }
    assert_eq!(std::fs::read_dir(d1.join("sims")).unwrap().count(), 25 * 2);
    let (mut m1, mut m2) = (manifest(&d1), manifest(&d2));
    assert_eq!(m1.mode, "constrained");
    assert_eq!(m1.delta_max, Some(0.8));
    for m in [&mut m1, &mut m2] {
        m.started_unix = 0;
        m.finished_unix = 0;
    }
    assert_eq!(m1, m2);
}

#[test]
fn validate_reports_residuals_and_rejects_tiny_or_corrupt_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "desk", "");
    let run = tmp.path().join("optimize-rk-seed1");
    let o = nfdtoll(&["--config", &cfg, "optimize", "--budget", "26", "--no-sims", "--seed", "1"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = nfdtoll(&["validate", run.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("of 26 standardized LOO residuals inside [-3, 3]"), "{}", stdout(&o));

    let samples = std::fs::read_to_string(run.join("samples.csv")).unwrap();
    let tiny = tmp.path().join("tiny");
    std::fs::create_dir(&tiny).unwrap();
    std::fs::copy(run.join("config.toml"), tiny.join("config.toml")).unwrap();
    std::fs::write(tiny.join("samples.csv"), samples.lines().take(3).collect::<Vec<_>>().join("\n")).unwrap();
    let o = nfdtoll(&["validate", tiny.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("insufficient samples"));

    std::fs::write(tiny.join("samples.csv"), samples.replacen(",initial,", ",initial,oops", 1)).unwrap();
    let o = nfdtoll(&["validate", tiny.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("corrupt samples file"), "{}", stderr(&o));
}

#[test]
fn compare_writes_one_curve_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "desk", "");
    let o = nfdtoll(&["--config", &cfg, "compare", "--budget", "24", "--seeds", "0,1,2"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let labels = compare_labels(&tmp.path().join("compare.csv")).unwrap();
    assert_eq!(labels, ["rk-seed0", "rk-seed1", "rk-seed2", "direct"]);
    let text = std::fs::read_to_string(tmp.path().join("compare.csv")).unwrap();
    let direct: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("direct,"))
        .filter_map(|l| l.rsplit(',').next().unwrap().parse().ok())
        .collect();
    assert!(direct.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn envelope_is_deterministic_and_rises_from_the_origin() {
    let cfg = Config::preset(Preset::Default);
    let one = envelope_cmd(&cfg, 1, 4).unwrap();
    assert_eq!(one.fragment, envelope_cmd(&cfg, 1, 4).unwrap().fragment);
    let ten = envelope_cmd(&cfg, 10, 0).unwrap();
    assert!(ten.envelope.c > 0.0 && ten.envelope.a <= 0.0, "{:?}", ten.envelope);
    let back = Config::from_toml_str(&ten.fragment, Preset::Default).unwrap();
    assert_eq!(back.network.envelope.c, ten.envelope.c);
}

#[test]
fn doe_export_matches_the_optimizer_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nfdtoll(&["--preset", "desk", "doe", "--seed", "11"], tmp.path());
    assert!(o.status.success());
    let plan = std::fs::read_to_string(tmp.path().join("plan-seed11.csv")).unwrap();
    assert_eq!(plan.lines().next().unwrap(), "v_1,v_2,v_3,v_4,w_1,w_2,w_3,w_4");
    assert_eq!(plan.lines().count(), 22);
    let o = nfdtoll(&["--preset", "desk", "optimize", "--budget", "22", "--no-sims", "--seed", "11"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let samples = std::fs::read_to_string(tmp.path().join("optimize-rk-seed11/samples.csv")).unwrap();
    for (p, s) in plan.lines().skip(1).zip(samples.lines().skip(1)) {
        let fields: Vec<&str> = s.split(',').collect();
        assert_eq!(p, fields[2..10].join(","));
    }
}
