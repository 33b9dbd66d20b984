//! `powerlines`: fit and apply hyperparameter scaling laws from run records.
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod outputs;

use outputs::Outputs;

#[derive(Parser, Debug)]
#[command(name = "powerlines", version, about = "Fit and apply hyperparameter scaling laws from training-run records")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command. Each can also be given in the
/// `--config` file; flags win.
#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// JSON file of flag defaults (top-level keys for global flags, an object
    /// per command name for that command's flags)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized step
    #[arg(long, global = true, env = "POWERLINES_SEED")]
    pub seed: Option<u64>,
    /// Print machine-readable JSON instead of tables
    #[arg(long, global = true)]
    pub json: bool,
    /// Sequence length for runs that do not state one
    #[arg(long, global = true, default_value_t = 2048)]
    pub seq_len_default: u64,
    /// Width of the muP proxy model
    #[arg(long, global = true, default_value_t = 256)]
    pub proxy_width: u64,
    #[arg(long, global = true, default_value_t = 1000)]
    pub bootstrap_iters: usize,
    /// Fraction of points kept per bootstrap refit
    #[arg(long, global = true, default_value_t = 0.8)]
    pub bootstrap_frac: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the optimal-timescale law from weight-decay sweeps
    FitTau(commands::FitTauArgs),
    /// Recommend a weight decay for a planned run
    RecommendLambda(commands::RecommendLambdaArgs),
    /// Fit the optimal-batch-size law from batch sweeps
    FitBopt(commands::FitBoptArgs),
    /// Estimate critical batch sizes at target losses and fit their law
    FitBcrit(commands::FitBcritArgs),
    /// Fit the loss surface over model size and data
    FitChinchilla(commands::FitChinchillaArgs),
    /// Trace iso-loss curves and the time/compute Pareto frontier
    Pareto(commands::ParetoArgs),
    /// Compare EMA coefficient curves across step counts
    EmaSim(commands::EmaSimArgs),
    /// Generate runs from a planted synthetic world
    Synth(commands::SynthArgs),
    /// Restate a published batch-size law in this toolkit's units
    ConvertLaw(commands::ConvertLawArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TimeModelArg {
    FlopsPerBatch,
    Steps,
}

/// Marks failures caused by bad input rather than the environment.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.is::<std::io::Error>()) && !err.is::<Invalid>() {
        1
    } else {
        2
    }
}

fn run(cli: Cli, outputs: &mut Outputs) -> Result<()> {
    let g = &cli.global;
    config::validate(g)?;
    match cli.command {
        Command::FitTau(a) => commands::fit_tau(g, a, outputs),
        Command::RecommendLambda(a) => commands::recommend_lambda(g, a),
        Command::FitBopt(a) => commands::fit_bopt(g, a, outputs),
        Command::FitBcrit(a) => commands::fit_bcrit(g, a, outputs),
        Command::FitChinchilla(a) => commands::fit_chinchilla(g, a, outputs),
        Command::Pareto(a) => commands::pareto(g, a, outputs),
        Command::EmaSim(a) => commands::ema_sim(g, a, outputs),
        Command::Synth(a) => commands::synth(g, a, outputs),
        Command::ConvertLaw(a) => commands::convert_law(g, a, outputs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match config::merged_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    let mut outputs = Outputs::default();
    match run(cli, &mut outputs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.remove_all();
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
