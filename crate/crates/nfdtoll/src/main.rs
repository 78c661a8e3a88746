use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nfdtoll::commands::{self, OptimizeRequest};
use nfdtoll::config::{Config, Preset};
use nfdtoll::CliError;
use nfdtoll_core::tlp::Method;
use nfdtoll_core::TollVector;

/// Surrogate-based toll level optimization for a pricing zone.
#[derive(Parser)]
#[command(name = "nfdtoll", version)]
struct Cli {
    /// TOML config; keys it leaves out come from the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Preset the config is merged over (a `preset` key in the file wins).
    #[arg(long, value_enum, global = true, default_value = "default")]
    preset: Preset,
    /// Root directory for default output locations.
    #[arg(long, global = true, env = "NFDTOLL_OUT", default_value = "nfdtoll-runs")]
    out: PathBuf,
    /// Print the fully resolved config and exit.
    #[arg(long)]
    print_config: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rk,
    Direct,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulator once and write its time series.
    Simulate {
        /// Flat toll `v_1,..,v_m,w_1,..,w_m`; zero toll when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        toll: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory [default: <out>/simulate-seed<seed>]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve the toll level problem and write a run directory.
    Optimize {
        #[arg(long, value_enum, default_value = "rk")]
        method: MethodArg,
        /// Total evaluations, initial plan included.
        #[arg(long)]
        budget: Option<usize>,
        /// Limit on the mean deviation from spread; switches to the
        /// constrained problem.
        #[arg(long)]
        delta_max: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the per-evaluation simulator CSVs.
        #[arg(long)]
        no_sims: bool,
        /// Run directory [default: <out>/optimize-<method>-seed<seed>]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cross-validate the surrogate refitted on a run's samples.
    Validate { run_dir: PathBuf },
    /// RK once per seed and DIRECT once; merged incumbent curves.
    Compare {
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        /// CSV path [default: <out>/compare.csv]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the lower envelope to pooled zero-toll runs.
    Envelope {
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the config fragment here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export the initial sample plan.
    Doe {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path [default: <out>/plan-seed<seed>.csv]
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    match &cli.config {
        Some(path) => Config::load(path, cli.preset),
        None => Ok(Config::preset(cli.preset)),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = load_config(&cli)?;
    if cli.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let command = cli
        .command
        .as_ref()
        .ok_or_else(|| CliError::Usage("no subcommand given; see --help".into()))?;
    let out = cli.out.as_path();
    let or = |p: &Option<PathBuf>, default: &str| p.clone().unwrap_or_else(|| out.join(default));
    match command {
        Command::Simulate { toll, seed, output } => {
            let m = config.intervals();
            let toll = match toll {
                None => TollVector::zero(m),
                Some(x) if x.len() == 2 * m => {
                    TollVector::from_flat(x).map_err(|e| CliError::Usage(format!("--toll: {e}")))?
                }
                Some(x) => return Err(CliError::Usage(format!("--toll needs {} values, got {}", 2 * m, x.len()))),
            };
            let dir = or(output, &format!("simulate-seed{seed}"));
            println!("{}", commands::simulate_cmd(&config, &toll, *seed, &dir)?);
        }
        Command::Optimize { method, budget, delta_max, alpha, beta, seed, no_sims, output } => {
            let method = match method {
                MethodArg::Rk => Method::RkEi,
                MethodArg::Direct => Method::Direct,
            };
            let p = &mut config.problem;
            p.budget = budget.unwrap_or(p.budget);
            p.delta_max = delta_max.or(p.delta_max);
            p.alpha = alpha.unwrap_or(p.alpha);
            p.beta = beta.unwrap_or(p.beta);
            let dir = or(output, &format!("optimize-{}-seed{seed}", method.label()));
            let req = OptimizeRequest {
                method,
                seed: *seed,
                record_simulations: !no_sims,
            };
            println!("{}", commands::optimize_cmd(&config, &req, &dir)?);
        }
        Command::Validate { run_dir } => print!("{}", commands::validate_cmd(run_dir)?),
        Command::Compare { budget, seeds, output } => {
            config.problem.budget = budget.unwrap_or(config.problem.budget);
            println!("{}", commands::compare_cmd(&config, seeds, &or(output, "compare.csv"))?);
        }
        Command::Envelope { runs, seed, output } => {
            let report = commands::envelope_cmd(&config, *runs, *seed)?;
            print!("{report}");
            if let Some(path) = output {
                nfdtoll::output::write_text(path, &report.fragment)?;
            }
        }
        Command::Doe { seed, output } => {
            let path = or(output, &format!("plan-seed{seed}.csv"));
            let plan = commands::doe_cmd(&config, *seed, &path)?;
            println!("{} plan points written to {}", plan.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

