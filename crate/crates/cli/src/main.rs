//! `ssrm` — config-driven runner for semi-supervised reward modeling
//! experiments.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Command;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "ssrm",
    version,
    about = "Semi-supervised reward modeling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset with oracle side files.
    Gen(Common),
    /// Partition labeled data into D_l and D_u.
    Split(Common),
    /// Fit a model on D_l only.
    Srm(Common),
    /// Run the pseudo-label / filter / retrain loop.
    Ssrm(Common),
    /// Accuracy of a snapshot on the test set.
    Eval(WithSnapshot),
    /// Calibration and reliability tables for a snapshot.
    Calibrate(WithSnapshot),
    /// Single-round SSRM accuracy across labeled fractions.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set ssrm.threshold=0.9`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: `output_dir`, then `$SSRM_OUTPUT_ROOT/<config>`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Check existing outputs against the config hash instead of running.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct WithSnapshot {
    #[command(flatten)]
    common: Common,
    /// Snapshot to load; same as `--set eval.snapshot=PATH`.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (command, common, snapshot) = match cli.command {
        Cmd::Gen(c) => (Command::Gen, c, None),
        Cmd::Split(c) => (Command::Split, c, None),
        Cmd::Srm(c) => (Command::Srm, c, None),
        Cmd::Ssrm(c) => (Command::Ssrm, c, None),
        Cmd::Eval(w) => (Command::Eval, w.common, w.snapshot),
        Cmd::Calibrate(w) => (Command::Calibrate, w.common, w.snapshot),
        Cmd::Sweep(c) => (Command::Sweep, c, None),
    };
    let mut overrides = common.overrides;
    if let Some(s) = snapshot {
        overrides.push(format!(
            "eval.snapshot={}",
            toml_string(&s.to_string_lossy())
        ));
    }
    let cfg = ExperimentConfig::load(common.config.as_deref(), &overrides)?;
    let hash = cfg.hash()?;
    let name = common
        .config
        .as_deref()
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| command.name().to_string());
    let out = cfg.resolve_output(common.out.as_deref(), &name);

    if common.verify {
        let results = artifacts::verify(&out, &hash, &command.expected_files(&cfg));
        let mut ok = true;
        for (file, status) in &results {
            match status {
                Ok(()) => println!("ok       {}", out.join(file).display()),
                Err(e) => {
                    ok = false;
                    println!("MISMATCH {}: {e}", out.join(file).display());
                }
            }
        }
        return Ok(if ok {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        });
    }

    let written = command.run(&cfg, &out, &hash)?;
    println!("config_hash {hash}");
    for file in written {
        println!("wrote {}", out.join(file).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}
