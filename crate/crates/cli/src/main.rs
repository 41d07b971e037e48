//! `exoforge`: one entry point wiring the library into file-level
//! workflows: design optimization, linkage fitting, calibration, stream
//! decoding, episode alignment, mask compositing, action replay, fixture
//! generation, and report emission.
//!
//! Conventions shared by every command: exit 0 on success with a one-line
//! JSON status on stdout; exit 1 with a one-line JSON error on stderr;
//! exit 2 for usage errors. Artifact-producing commands write a manifest
//! next to their output. `EXOFORGE_THREADS` caps the worker pool.

mod cmd;
mod err;
mod manifest;
mod records;

use clap::{Parser, Subcommand};

use err::CliError;

#[derive(Parser)]
#[command(name = "exoforge", version, about)]
struct Cli {
    /// Seed for every random draw; overrides config-file seeds when set.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize exoskeleton design parameters against a robot fingertip
    /// workspace.
    Optimize(cmd::optimize::OptimizeArgs),
    /// Fit an equivalent one-input linkage to a sampled fingertip
    /// workspace.
    FitLinkage(cmd::fit_linkage::FitLinkageArgs),
    /// Fit per-joint encoder-to-motor calibration tables from paired
    /// recordings.
    Calibrate(cmd::calibrate::CalibrateArgs),
    /// Decode a raw sensor byte stream into JSONL records.
    Decode(cmd::decode::DecodeArgs),
    /// Assemble a camera-aligned episode from per-channel logs.
    Align(cmd::align::AlignArgs),
    /// Composite robot frames over inpainted backgrounds through mask
    /// intersection.
    Compose(cmd::compose::ComposeArgs),
    /// Replay an action log into dense command streams.
    ExecSim(cmd::exec_sim::ExecSimArgs),
    /// Generate a synthetic sensor byte stream with ground truth.
    GenStream(cmd::gen_stream::GenStreamArgs),
    /// Write a demo fixture bundle usable by every other command.
    GenFixtures(cmd::gen_fixtures::GenFixturesArgs),
    /// Summarize artifacts into plot-ready JSON and CSV series.
    Report(cmd::report::ReportArgs),
}

fn init_thread_pool() -> Result<(), CliError> {
    if let Ok(text) = std::env::var("EXOFORGE_THREADS") {
        let threads: usize = text
            .parse()
            .map_err(|_| CliError::msg("env", format!("EXOFORGE_THREADS=`{text}` is not a thread count")))?;
        if threads == 0 {
            return Err(CliError::msg("env", "EXOFORGE_THREADS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::msg("env", e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_thread_pool()?;
    let seed = cli.seed;
    match cli.command {
        Command::Optimize(args) => cmd::optimize::run(args, seed),
        Command::FitLinkage(args) => cmd::fit_linkage::run(args, seed),
        Command::Calibrate(args) => cmd::calibrate::run(args),
        Command::Decode(args) => cmd::decode::run(args),
        Command::Align(args) => cmd::align::run(args),
        Command::Compose(args) => cmd::compose::run(args),
        Command::ExecSim(args) => cmd::exec_sim::run(args),
        Command::GenStream(args) => cmd::gen_stream::run(args, seed),
        Command::GenFixtures(args) => cmd::gen_fixtures::run(args, seed),
        Command::Report(args) => cmd::report::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", e.to_json());
        std::process::exit(1);
    }
}
