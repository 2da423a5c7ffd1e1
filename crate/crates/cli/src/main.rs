//! `dg` — doubling-condition toolkit CLI.
//!
//! Every subcommand writes its artifacts under `--out DIR` together with
//! a `manifest.json`, prints a JSON summary to stdout, and reports
//! diagnostics on stderr. Exit codes: 0 success, 2 validation error
//! (bad flags, malformed config or data), 1 runtime error. A negative
//! analytic verdict (a condition that fails to hold, a correlation that
//! is undefined) is still a successful run and exits 0.

mod commands;
mod config;
mod manifest;
mod plot;

use std::path::PathBuf;

use clap::Parser;
use dg_core::error::DgError;

use crate::commands::constants::ConstantsCmd;
use crate::config::FileConfig;

#[derive(Parser)]
#[command(
    name = "dg",
    version,
    about = "Doubling-condition toolkit: data checks, stability constants, \
             and training experiments"
)]
struct Cli {
    /// Plain-text `key = value` config file with `[section]` headers;
    /// every CLI flag overrides the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and `manifest.json`.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Generate a polynomial-boundary dataset CSV.
    GenData(commands::gen_data::GenDataArgs),
    /// Train the built-in MLP on a dataset and write a checkpoint.
    Train(commands::train::TrainArgs),
    /// Scan random slabs for how far doubling growth holds.
    Sudc(commands::sudc::SudcArgs),
    /// Compute the classification-confidence distribution of a checkpoint.
    Deltax(commands::deltax::DeltaxArgs),
    /// Stability constants, derived bounds, and hypothesis checks.
    Constants {
        #[command(subcommand)]
        cmd: ConstantsCmd,
    },
    /// Verify doubling propagation through a map on a dataset.
    Propagate(commands::propagate::PropagateArgs),
    /// Full experiment: generate, train, scan, correlate.
    Pipeline(commands::pipeline::PipelineArgs),
    /// Re-plot a pipeline's per-run table as size vs mean final width.
    Report(commands::report::ReportArgs),
}

/// Validation failures (bad parameters, missing inputs, malformed files)
/// exit 2; everything else that errors exits 1.
fn exit_code_for(err: &DgError) -> i32 {
    match err {
        DgError::InvalidParameter { .. }
        | DgError::MissingInputs { .. }
        | DgError::Parse { .. }
        | DgError::DimensionMismatch { .. } => 2,
        _ => 1,
    }
}

fn run(cli: &Cli) -> dg_core::error::Result<()> {
    let cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::empty(),
    };
    let out = cli.out.as_path();
    match &cli.command {
        Command::GenData(args) => commands::gen_data::run(&cfg, out, args),
        Command::Train(args) => commands::train::run(&cfg, out, args),
        Command::Sudc(args) => commands::sudc::run(&cfg, out, args),
        Command::Deltax(args) => commands::deltax::run(&cfg, out, args),
        Command::Constants { cmd } => commands::constants::run(&cfg, out, cmd),
        Command::Propagate(args) => commands::propagate::run(&cfg, out, args),
        Command::Pipeline(args) => commands::pipeline::run(&cfg, out, args),
        Command::Report(args) => commands::report::run(&cfg, out, args),
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code_for(&e));
    }
}
