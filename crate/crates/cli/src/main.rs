//! Experiment runner: trains models with polynomial weight groups, accounts
//! for the hardware savings of the coefficient-domain schedule, and runs the
//! post-hoc projection comparison.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod plot;

use config::ResolveArgs;

#[derive(Parser)]
#[command(name = "polyreuse", version, about = "Polynomial weight approximation and computation-reuse toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct SelectArgs {
    /// Named preset (see `polyreuse presets`).
    #[arg(long)]
    preset: Option<String>,
    /// JSON config file, layered over the preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch count override.
    #[arg(long)]
    epochs: Option<u32>,
    /// Dataset root (default: $POLYREUSE_DATA_ROOT, then ./data).
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model, writing metrics.csv, model.pwc, model.q8 and summary.json.
    Train(SelectArgs),
    /// Emit the adder/multiplier tables, the ifmap-size sweep CSV and an SVG chart.
    Cost {
        #[command(flatten)]
        select: SelectArgs,
        /// Print the report as JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Summarize a checkpoint: per-layer parameters, memory and reduction rate.
    Report {
        /// Path to a model.pwc checkpoint (summary.json sidecar expected next to it).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// One-shot projection of a trained checkpoint; prints the accuracy drop.
    Posthoc {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        select: SelectArgs,
    },
    /// List the named presets.
    Presets,
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Train(select) => {
            let resolved = resolve(&select)?;
            commands::cmd_train(&resolved, &select.out)
        }
        Cmd::Cost { select, json } => {
            let resolved = resolve(&select)?;
            commands::cmd_cost(&resolved, &select.out, json)
        }
        Cmd::Report { checkpoint, out } => commands::cmd_report(&checkpoint, &out),
        Cmd::Posthoc { checkpoint, select } => {
            let resolved = resolve(&select)?;
            commands::cmd_posthoc(&checkpoint, &resolved, &select.out)
        }
        Cmd::Presets => {
            for preset in polyreuse_core::presets::all() {
                println!("{:<18} {}", preset.name, preset.arch.name());
            }
            Ok(())
        }
    }
}

fn resolve(select: &SelectArgs) -> Result<config::Resolved> {
    config::resolve(ResolveArgs {
        preset: select.preset.as_deref(),
        config: select.config.as_deref(),
        seed: select.seed,
        epochs: select.epochs,
        data_root: select.data_root.as_deref(),
    })
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Machine-readable failure channel: one JSON object on stderr.
            let payload = serde_json::json!({
                "error": format!("{err:#}"),
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
