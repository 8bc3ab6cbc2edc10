//! `mcbm` command-line front end.
//!
//! Every command resolves its configuration as flags over `--config` file
//! over defaults, writes outputs atomically and records a manifest that can
//! be fed back through `--config` to reproduce the run.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};

pub use commands::*;
pub use manifest::{sha256_hex, Manifest, OutputFile};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "mcbm", version, about = "Matryoshka concept bottleneck models at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted level structure.
    Synth(SynthArgs),
    /// Load a dataset and write it back in canonical CSV.
    Load(LoadArgs),
    /// Rank concepts by mRMR.
    Rank(RankArgs),
    /// Top-k overlap of rankings on resampled data.
    Stability(StabilityArgs),
    /// Train a nested-head model.
    Train(TrainArgs),
    /// Accuracy and macro F1 per head.
    Evaluate(EvaluateArgs),
    /// Simulate prefix interventions.
    Intervene(InterveneArgs),
    /// Fit a geometric decay to a level histogram.
    DecayFit(DecayFitArgs),
    /// Monte Carlo expected-cost table for one (r, gamma).
    Regimes(RegimesArgs),
    /// Intervention error bound reports.
    Bound(BoundArgs),
    /// Rank, train, intervene and analyse in one run.
    Pipeline(PipelineArgs),
}

/// Parses `argv` and runs the command. Returns the process exit code:
/// 0 on success, 1 on a domain error, 2 on a usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "error[{}]: {}", e.kind(), first_line(&e.to_string()));
            if let Some(src) = std::error::Error::source(&e) {
                let _ = writeln!(err, "  caused by: {src}");
            }
            1
        }
    }
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("")
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => commands::synth(a),
        Command::Load(a) => commands::load(a),
        Command::Rank(a) => commands::rank(a),
        Command::Stability(a) => commands::stability(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Intervene(a) => commands::intervene(a),
        Command::DecayFit(a) => commands::decay_fit(a),
        Command::Regimes(a) => commands::regimes(a),
        Command::Bound(a) => commands::bound(a),
        Command::Pipeline(a) => commands::pipeline(a),
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::spec(format!("{} is not a file path", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
