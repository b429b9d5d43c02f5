//! `focus`: command-line frontend for the adaptation pipeline.
//!
//! Every subcommand reads one JSON config, derives all randomness from a
//! single master seed, and writes its artifacts under the configured output
//! root (`$FOCUS_RUN_ROOT` overrides it). Exit codes: 0 success, 2 usage,
//! and 3-6 by error category as printed on the final stderr line.

mod log;
mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use focus_core::dynamics::AdaptMode;
use focus_core::online::Method;

use crate::log::Logger;

#[derive(Parser)]
#[command(name = "focus", version, about = "Curriculum-weighted dynamics adaptation pipeline")]
struct Cli {
    /// Log one JSON object per line ({ts, level, event, ...}) instead of
    /// plain text.
    #[arg(long, global = true)]
    json_logs: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect random-action transitions in the source environment.
    CollectSource(ConfigArgs),
    /// Pre-train the dynamics model on collected source data.
    TrainSource(TrainSourceArgs),
    /// Generate the adaptation benchmark: a target-environment training set
    /// plus a similar-only validation set.
    MakeBenchmark(ConfigArgs),
    /// Fine-tune a source checkpoint on a benchmark's training set.
    Adapt(AdaptArgs),
    /// Compare every adaptation mode on a benchmark over the config's seeds.
    Validate(ValidateArgs),
    /// Run the online learn/plan/collect loop, writing one run directory.
    Online(OnlineArgs),
    /// Evaluate each saved iteration of an online run.
    Eval(EvalArgs),
    /// Emit figure-data CSVs from completed artifacts.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; defaults to the first entry of train.seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path override (a file or directory depending on the command).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainSourceArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Source dataset override (defaults to the collect-source location).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct AdaptArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Weighting rule to fine-tune under.
    #[arg(long, default_value = "focus")]
    mode: AdaptMode,
    /// Benchmark directory (defaults to the make-benchmark location).
    #[arg(long)]
    benchmark: Option<PathBuf>,
    /// Source checkpoint (defaults to the train-source location).
    #[arg(long)]
    source_ckpt: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Benchmark directory (defaults to the make-benchmark location).
    #[arg(long)]
    benchmark: Option<PathBuf>,
    /// Source checkpoint (defaults to the train-source location).
    #[arg(long)]
    source_ckpt: Option<PathBuf>,
}

#[derive(Args)]
struct OnlineArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Experiment arm to run.
    #[arg(long, default_value = "focus")]
    method: Method,
    /// Source checkpoint (defaults to the train-source location).
    #[arg(long)]
    source_ckpt: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory written by `focus online`.
    #[arg(long)]
    run: PathBuf,
    /// Episodes per iteration (defaults to eval.n_episodes in the run's
    /// config).
    #[arg(long)]
    n_episodes: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// A train_report.csv to unpack into a long-format weight histogram.
    #[arg(long)]
    train_report: Option<PathBuf>,
    /// A validation.csv to summarize (means and p-values per mode).
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Run directories whose eval metrics feed the learning curves.
    #[arg(long = "run")]
    runs: Vec<PathBuf>,
    /// Seed for the bootstrap confidence intervals.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory the report CSVs are written to.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let logger = Logger::new(cli.json_logs);
    let result = match cli.command {
        Command::CollectSource(a) => ops::collect_source(&logger, &a),
        Command::TrainSource(a) => ops::train_source(&logger, &a),
        Command::MakeBenchmark(a) => ops::make_benchmark(&logger, &a),
        Command::Adapt(a) => ops::adapt(&logger, &a),
        Command::Validate(a) => ops::validate(&logger, &a),
        Command::Online(a) => ops::online(&logger, &a),
        Command::Eval(a) => ops::eval(&logger, &a),
        Command::Report(a) => ops::report(&logger, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: category={} {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
