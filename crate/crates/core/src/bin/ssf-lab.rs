use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssf_lab::harness::{run, ExperimentConfig, Family};

#[derive(Parser)]
#[command(name = "ssf-lab", version, about = "Semiclassical trace formula and spectral shift experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV tables and the JSON report.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Microhyperbolicity on sampled energy shells.
    CheckMh(Common),
    /// Escape-function positivity.
    CheckEscape(Common),
    /// Leading coefficients on an energy grid.
    Coeffs(Common),
    /// Smoothed trace sweeps over h.
    Trace(Common),
    /// Spectral shift estimators and their sweeps.
    Ssf(Common),
    /// Every experiment in the config.
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (family, common) = match cli.command {
        Command::CheckMh(c) => (Family::CheckMh, c),
        Command::CheckEscape(c) => (Family::CheckEscape, c),
        Command::Coeffs(c) => (Family::Coeffs, c),
        Command::Trace(c) => (Family::Trace, c),
        Command::Ssf(c) => (Family::Ssf, c),
        Command::Sweep(c) => (Family::Sweep, c),
    };
    let outcome = ExperimentConfig::load(&common.config)
        .and_then(|cfg| run(&cfg, family, common.workers))
        .and_then(|summary| summary.write(&common.out).map(|_| summary));
    match outcome {
        Ok(summary) => {
            for line in summary.lines() {
                println!("{line}");
            }
            println!("report: {}", common.out.join("report.json").display());
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
