//! TOML configuration: presets, partial overrides and conversion to the core
//! problem types.
//!
//! A config file may set `preset = "default" | "desk" | "restricted"` at the
//! top level and override any subset of keys; everything else comes from the
//! preset. Unknown keys are rejected and errors name the offending key path.

use std::path::Path;

use nfdtoll_core::direct::BudgetPolicy;
use nfdtoll_core::ga::GAParams;
use nfdtoll_core::simnet::{Envelope, FundamentalDiagram, NetworkConfig};
use nfdtoll_core::surrogate::FitOptions;
use nfdtoll_core::tlp::{OptimizeOptions, ProblemSpec};
use nfdtoll_core::{Bounds, Smoothing};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 8 cells, 15 min intervals, m = 8
    Default,
    /// 30 min intervals, m = 4
    Desk,
    /// one interval over the whole window, m = 1
    Restricted,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Preset> {
        match name {
            "default" => Some(Preset::Default),
            "desk" => Some(Preset::Desk),
            "restricted" => Some(Preset::Restricted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub network: NetworkSection,
    pub problem: ProblemSection,
    pub solver: SolverSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSection {
    pub free_flow_speed: f64,
    pub critical_density: f64,
    pub plateau_end: f64,
    pub jam_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSection {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Units follow the core simulator: km, veh/h, veh/km/lane, hours, minutes
/// where the key says so.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub cell_lengths: Vec<f64>,
    pub cell_lanes: Vec<f64>,
    pub inflow_shares: Vec<f64>,
    pub drain_multipliers: Vec<f64>,
    pub route_sensitivity: f64,
    pub unloading_gain: f64,
    pub unloading_smoothing_min: f64,
    pub bypass_capacity: f64,
    pub bypass_length: f64,
    pub bypass_free_speed: f64,
    /// `[t, veh/h]` breakpoints
    pub demand_profile: Vec<[f64; 2]>,
    pub pz_path_length: f64,
    pub vtt: f64,
    pub logit_scale: f64,
    pub k_cr: f64,
    pub step_s: f64,
    pub horizon: f64,
    pub tolling_window: [f64; 2],
    pub interval_min: f64,
    pub demand_cv: f64,
    pub envelope: EnvelopeSection,
    pub fd: Vec<FdSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// currency/km
    pub max_distance_rate: f64,
    /// currency/h
    pub max_delay_rate: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    pub replications: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaSection {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// absent means `1/d`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation_rate: Option<f64>,
    pub mutation_scale: f64,
    pub elitism: usize,
    pub tournament_size: usize,
    pub blend_alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectBudget {
    Strict,
    CompleteIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub theta_bounds: [f64; 2],
    pub lambda_bounds: [f64; 2],
    pub direct_epsilon: f64,
    pub penalty_scale: f64,
    pub direct_budget: DirectBudget,
    pub fit_ga: GaSection,
    pub infill_ga: GaSection,
}

impl From<&GAParams> for GaSection {
    fn from(p: &GAParams) -> Self {
        GaSection {
            population_size: p.population_size,
            generations: p.generations,
            crossover_rate: p.crossover_rate,
            mutation_rate: p.mutation_rate,
            mutation_scale: p.mutation_scale,
            elitism: p.elitism,
            tournament_size: p.tournament_size,
            blend_alpha: p.blend_alpha,
        }
    }
}

impl From<&GaSection> for GAParams {
    fn from(s: &GaSection) -> Self {
        GAParams {
            population_size: s.population_size,
            generations: s.generations,
            crossover_rate: s.crossover_rate,
            mutation_rate: s.mutation_rate,
            mutation_scale: s.mutation_scale,
            elitism: s.elitism,
            tournament_size: s.tournament_size,
            blend_alpha: s.blend_alpha,
        }
    }
}

impl From<&NetworkConfig> for NetworkSection {
    fn from(c: &NetworkConfig) -> Self {
        NetworkSection {
            cell_lengths: c.cell_lengths.clone(),
            cell_lanes: c.cell_lanes.clone(),
            inflow_shares: c.inflow_shares.clone(),
            drain_multipliers: c.drain_multipliers.clone(),
            route_sensitivity: c.route_sensitivity,
            unloading_gain: c.unloading_gain,
            unloading_smoothing_min: c.unloading_smoothing_min,
            bypass_capacity: c.bypass_capacity,
            bypass_length: c.bypass_length,
            bypass_free_speed: c.bypass_free_speed,
            demand_profile: c.demand_profile.iter().map(|&(t, q)| [t, q]).collect(),
            pz_path_length: c.pz_path_length,
            vtt: c.vtt,
            logit_scale: c.logit_scale,
            k_cr: c.k_cr,
            step_s: c.step_s,
            horizon: c.horizon,
            tolling_window: [c.tolling_window.0, c.tolling_window.1],
            interval_min: c.interval_min,
            demand_cv: c.demand_cv,
            envelope: EnvelopeSection {
                a: c.envelope.a,
                b: c.envelope.b,
                c: c.envelope.c,
            },
            fd: c
                .fd
                .iter()
                .map(|f| FdSection {
                    free_flow_speed: f.free_flow_speed,
                    critical_density: f.critical_density,
                    plateau_end: f.plateau_end,
                    jam_density: f.jam_density,
                })
                .collect(),
        }
    }
}

impl NetworkSection {
    pub fn to_core(&self) -> NetworkConfig {
        NetworkConfig {
            cell_lengths: self.cell_lengths.clone(),
            cell_lanes: self.cell_lanes.clone(),
            fd: self
                .fd
                .iter()
                .map(|f| FundamentalDiagram {
                    free_flow_speed: f.free_flow_speed,
                    critical_density: f.critical_density,
                    plateau_end: f.plateau_end,
                    jam_density: f.jam_density,
                })
                .collect(),
            inflow_shares: self.inflow_shares.clone(),
            drain_multipliers: self.drain_multipliers.clone(),
            route_sensitivity: self.route_sensitivity,
            unloading_gain: self.unloading_gain,
            unloading_smoothing_min: self.unloading_smoothing_min,
            bypass_capacity: self.bypass_capacity,
            bypass_length: self.bypass_length,
            bypass_free_speed: self.bypass_free_speed,
            demand_profile: self.demand_profile.iter().map(|p| (p[0], p[1])).collect(),
            pz_path_length: self.pz_path_length,
            vtt: self.vtt,
            logit_scale: self.logit_scale,
            k_cr: self.k_cr,
            envelope: Envelope {
                a: self.envelope.a,
                b: self.envelope.b,
                c: self.envelope.c,
            },
            step_s: self.step_s,
            horizon: self.horizon,
            tolling_window: (self.tolling_window[0], self.tolling_window[1]),
            interval_min: self.interval_min,
            demand_cv: self.demand_cv,
        }
    }
}

impl Config {
    pub fn preset(preset: Preset) -> Config {
        let (network, budget) = match preset {
            Preset::Default => (NetworkConfig::default_preset(), 100),
            Preset::Desk => (NetworkConfig::desk_preset(), 60),
            Preset::Restricted => (NetworkConfig::restricted_preset(), 40),
        };
        let opts = OptimizeOptions::default();
        Config {
            network: NetworkSection::from(&network),
            problem: ProblemSection {
                max_distance_rate: 1.0,
                max_delay_rate: 15.0,
                alpha: 1.0 / 3.0,
                beta: 5.0,
                delta_max: None,
                replications: nfdtoll_core::tlp::DEFAULT_REPLICATIONS,
                budget,
            },
            solver: SolverSection {
                theta_bounds: [opts.fit.theta_bounds.0, opts.fit.theta_bounds.1],
                lambda_bounds: [opts.fit.lambda_bounds.0, opts.fit.lambda_bounds.1],
                direct_epsilon: opts.direct_epsilon,
                penalty_scale: opts.penalty_scale,
                direct_budget: match opts.direct_budget {
                    BudgetPolicy::Strict => DirectBudget::Strict,
                    BudgetPolicy::CompleteIteration => DirectBudget::CompleteIteration,
                },
                fit_ga: GaSection::from(&opts.fit.ga),
                infill_ga: GaSection::from(&opts.infill_ga),
            },
        }
    }

    /// Parses `text` as overrides on top of `fallback` (or the preset named
    /// in the file).
    pub fn from_toml_str(text: &str, fallback: Preset) -> Result<Config, CliError> {
        let mut overrides: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config syntax: {e}")))?;
        let preset = match overrides.remove("preset") {
            None => fallback,
            Some(toml::Value::String(name)) => Preset::parse(&name)
                .ok_or_else(|| CliError::Usage(format!("config key `preset`: unknown preset `{name}`")))?,
            Some(_) => return Err(CliError::Usage("config key `preset`: expected a string".into())),
        };
        let base = toml::Value::try_from(Config::preset(preset))
            .map_err(|e| CliError::Runtime(format!("serializing preset: {e}")))?;
        let mut merged = base;
        merge(&mut merged, toml::Value::Table(overrides));
        let config: Config = serde_path_to_error::deserialize(merged)
            .map_err(|e| CliError::Usage(format!("config key `{}`: {}", e.path(), e.inner())))?;
        config.problem_spec()?;
        Ok(config)
    }

    pub fn load(path: &Path, fallback: Preset) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Config::from_toml_str(&text, fallback)
            .map_err(|e| e.map_message(|m| format!("{}: {m}", path.display())))
    }

    /// Canonical text form: every key, fixed order.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn intervals(&self) -> usize {
        self.network.to_core().intervals()
    }

    /// Validated problem instance; `delta_max` and `budget` come from the
    /// problem section.
    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let network = self.network.to_core();
        network.validate().map_err(|e| CliError::Usage(format!("[network] {e}")))?;
        let m = network.intervals();
        let p = &self.problem;
        let bounds =
            Bounds::uniform(m, p.max_distance_rate, p.max_delay_rate).map_err(|e| CliError::Usage(format!("[problem] {e}")))?;
        let smoothing = Smoothing::new(p.alpha, p.beta).map_err(|e| CliError::Usage(format!("[problem] {e}")))?;
        let k_cr = network.k_cr;
        Ok(ProblemSpec {
            config: network,
            bounds,
            smoothing,
            k_cr,
            delta_max: p.delta_max,
            replications: p.replications,
            budget: p.budget,
        })
    }

    pub fn optimize_options(&self) -> Result<OptimizeOptions, CliError> {
        let s = &self.solver;
        let opts = OptimizeOptions {
            fit: FitOptions {
                theta_bounds: (s.theta_bounds[0], s.theta_bounds[1]),
                lambda_bounds: (s.lambda_bounds[0], s.lambda_bounds[1]),
                ga: GAParams::from(&s.fit_ga),
            },
            infill_ga: GAParams::from(&s.infill_ga),
            direct_epsilon: s.direct_epsilon,
            penalty_scale: s.penalty_scale,
            direct_budget: match s.direct_budget {
                DirectBudget::Strict => BudgetPolicy::Strict,
                DirectBudget::CompleteIteration => BudgetPolicy::CompleteIteration,
            },
        };
        opts.fit.ga.validate().map_err(|e| CliError::Usage(format!("[solver.fit_ga] {e}")))?;
        opts.infill_ga.validate().map_err(|e| CliError::Usage(format!("[solver.infill_ga] {e}")))?;
        Ok(opts)
    }
}

/// Tables merge key by key; any other value (arrays included) replaces.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for p in [Preset::Default, Preset::Desk, Preset::Restricted] {
            let c = Config::preset(p);
            let back = Config::from_toml_str(&c.to_toml(), Preset::Default).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.digest(), c.digest());
        }
    }

    #[test]
    fn partial_override_keeps_the_rest() {
        let c = Config::from_toml_str("preset = \"desk\"\n[problem]\nbudget = 45\ndelta_max = 0.8\n", Preset::Default)
            .unwrap();
        assert_eq!(c.problem.budget, 45);
        assert_eq!(c.problem.delta_max, Some(0.8));
        assert_eq!(c.intervals(), 4);
        assert_eq!(c.network, Config::preset(Preset::Desk).network);
    }

    #[test]
    fn unknown_and_mistyped_keys_are_named() {
        let e = Config::from_toml_str("[network]\nstep_sz = 2.0\n", Preset::Default).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("step_sz"), "{e}");
        let e = Config::from_toml_str("[solver.infill_ga]\ngenerations = \"many\"\n", Preset::Default).unwrap_err();
        assert!(e.to_string().contains("solver.infill_ga.generations"), "{e}");
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let e = Config::from_toml_str("[network]\ninterval_min = 7.0\n", Preset::Default).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
