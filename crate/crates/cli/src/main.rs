//! `foldbs`: kernels, gains, simulations, sweeps and self-checks from one config file.

mod checks;
mod commands;
mod config;
mod outputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::{Config, Overrides};

#[derive(Parser, Debug)]
#[command(name = "foldbs", version, about = "Folding backstepping synthesis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the control and observer kernels and write them as CSV.
    Kernels(Common),
    /// Write the feedback gains F1, F2 for each requested fold point.
    Gains(Common),
    /// Run one closed-loop (or open-loop) simulation.
    Simulate(Common),
    /// Run every (y0, yhat0) combination and write a summary table.
    Sweep(Common),
    /// Run residual, collapse, closed-form and round-trip checks.
    Verify(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration; built-in defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Kernel grid nodes per side.
    #[arg(long)]
    tri_n: Option<usize>,
    /// Simulation grid nodes on [-1, 1].
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    t_end: Option<f64>,
    /// open | state_fb | observer | output_fb
    #[arg(long)]
    mode: Option<String>,
    /// Fold point; a comma-separated list for `gains` and `sweep`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    y0: Vec<f64>,
    /// Measurement point; a comma-separated list for `sweep`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    yhat0: Vec<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            tri_n: self.tri_n,
            grid_n: self.grid_n,
            dt: self.dt,
            t_end: self.t_end,
            mode: self.mode.clone(),
            y0: self.y0.clone(),
            yhat0: self.yhat0.clone(),
        }
    }
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_CHECKS: u8 = 3;

fn exit_code(e: &anyhow::Error) -> u8 {
    use foldbs_core::Error;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::NonConvergence { .. } | Error::Singular(_) => EXIT_SOLVER,
                _ => EXIT_VALIDATION,
            };
        }
    }
    EXIT_VALIDATION
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let (common, cmd) = match &cli.command {
        Command::Kernels(c) => (c, "kernels"),
        Command::Gains(c) => (c, "gains"),
        Command::Simulate(c) => (c, "simulate"),
        Command::Sweep(c) => (c, "sweep"),
        Command::Verify(c) => (c, "verify"),
    };
    let mut cfg = Config::load(common.config.as_deref())?;
    cfg.apply(&common.overrides());
    cfg.validate()?;
    let y0_list_ok = matches!(cmd, "gains" | "sweep");
    if (common.y0.len() > 1 && !y0_list_ok) || (common.yhat0.len() > 1 && cmd != "sweep") {
        anyhow::bail!("{cmd} takes a single value for each point");
    }
    let path = common.config.as_deref();
    let out = common.out.as_path();
    match &cli.command {
        Command::Kernels(_) => commands::kernels(&cfg, path, out),
        Command::Gains(_) => {
            let y0s = if common.y0.is_empty() { vec![cfg.plant.y0] } else { common.y0.clone() };
            commands::gains(&cfg, path, out, &y0s)
        }
        Command::Simulate(_) => commands::simulate(&cfg, path, out),
        Command::Sweep(_) => commands::sweep(&cfg, path, out),
        Command::Verify(_) => commands::verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(EXIT_CHECKS),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
