//! `gpvs`: simulate data, fit the spike-and-slab GP models, predict from a
//! fitted run and summarise MCMC efficiency.

mod commands;
mod config;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::UsageError;

#[derive(Parser)]
#[command(name = "gpvs", version, about = "Gaussian-process models with spike-and-slab variable selection")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its truth manifest.
    Simulate(SimulateArgs),
    /// Run the sampler and write the trace and manifest.
    Fit(FitArgs),
    /// Predict a test set from a fitted run.
    Predict(PredictArgs),
    /// Autocorrelation times, ESS and acceptance rates of one or two runs.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Clone)]
pub struct OutDir {
    /// Output directory.
    #[arg(long, env = "GPVS_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Signal: small4, large-p, mixed or sensitivity.
    #[arg(long)]
    pub kernel: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// continuous, binary, count or survival.
    #[arg(long, default_value = "continuous")]
    pub kind: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Extra rows written to `<name>_test.csv`.
    #[arg(long, default_value_t = 0)]
    pub n_test: usize,
    /// Noise sd for continuous and binary responses.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub censor_rate: Option<f64>,
    #[arg(long)]
    pub baseline_rate: Option<f64>,
    /// Nuisance columns tied by a Gaussian copula.
    #[arg(long)]
    pub copula_columns: Option<usize>,
    #[arg(long, default_value_t = 0.7)]
    pub copula_correlation: f64,
    /// File stem of the outputs.
    #[arg(long, default_value = "data")]
    pub name: String,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args)]
pub struct FitArgs {
    /// Training CSV (or `data` in the config file).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// key = value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<String>,
    /// Response column (time column for survival data).
    #[arg(long)]
    pub response: Option<String>,
    /// Event column of survival data.
    #[arg(long)]
    pub event: Option<String>,
    /// exp1, exp2-separate, exp2-joint or matern.
    #[arg(long)]
    pub family: Option<String>,
    /// one, two or two-adaptive.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent chains run in parallel.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Knot ratio m/n of the projected model.
    #[arg(long)]
    pub projection_ratio: Option<f64>,
    /// Prior inclusion probability.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Test CSV recorded for `predict`.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Fraction of the data rows held out for `predict` instead of a test file.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Any config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub run: PathBuf,
    /// Test CSV; defaults to the run's `test` entry.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Training CSV; defaults to the run's `data` entry.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Inclusion probability needed to keep a predictor.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Use every k-th retained draw.
    #[arg(long, default_value_t = 10)]
    pub subsample: usize,
    /// Points of the survivor-curve time grid.
    #[arg(long, default_value_t = 51)]
    pub grid_points: usize,
    /// End of the time grid; defaults to the 90th percentile of test times.
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    /// One run (or chain) directory, or two to compare.
    #[arg(required = true, num_args = 1..=2)]
    pub runs: Vec<PathBuf>,
    /// Inclusion frequency above which a ρ is reported.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    pub out: OutDir,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate::run(&a),
        Command::Fit(a) => commands::fit::run(&a),
        Command::Predict(a) => commands::predict::run(&a),
        Command::Diagnose(a) => commands::diagnose::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Sources whose text the outer message already quotes are skipped.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
