//! Command-line front end: wires experiment configs to the library, runs
//! the named presets behind the published figures and tables, and writes
//! CSV data, gnuplot scripts and a run manifest.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
//! 3 completed with partial (node-stopped) results.

mod commands;
mod config;
mod output;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CmdError, CmdResult, Outcome};
use config::ExperimentSpec;

#[derive(Parser)]
#[command(
    name = "pilotwave",
    version,
    about = "Bohmian trajectories and Lyapunov exponents on a torus and its flat analog"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reference eigenstates and compare against the printed table
    States(RunArgs),
    /// Integrate trajectories; write (t, theta, phi, ...) CSV + plot script
    Trajectory(RunArgs),
    /// Integrate trajectories; write (theta mod 2pi, theta_dot) CSV + plot script
    Phasespace(RunArgs),
    /// Sweep starting angles, extract Lyapunov exponents, compare to the
    /// printed tables
    Lyapunov(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Named preset shipped with the repository (fig1..fig7, table2, table3, states)
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Path to an experiment config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Override both integration tolerances
    #[arg(long)]
    tol: Option<f64>,
}

impl RunArgs {
    fn load_spec(&self, default_preset: Option<&str>) -> Result<ExperimentSpec, CmdError> {
        let text = match (&self.preset, &self.config) {
            (Some(name), _) => presets::lookup(name)
                .ok_or_else(|| {
                    CmdError::Config(anyhow::anyhow!(
                        "unknown preset {name:?}; available: {}",
                        presets::names().join(", ")
                    ))
                })?
                .to_string(),
            (None, Some(path)) => std::fs::read_to_string(path).map_err(|e| {
                CmdError::Config(anyhow::anyhow!("cannot read {}: {e}", path.display()))
            })?,
            (None, None) => match default_preset {
                Some(name) => presets::lookup(name).expect("built-in preset").to_string(),
                None => {
                    return Err(CmdError::Config(anyhow::anyhow!(
                        "either --preset or --config is required"
                    )))
                }
            },
        };
        let mut spec = ExperimentSpec::parse(&text).map_err(CmdError::Config)?;
        if let Some(tol) = self.tol {
            spec.run.rel_tol = tol;
            spec.run.abs_tol = tol;
        }
        Ok(spec)
    }

    fn configure_jobs(&self) {
        if let Some(jobs) = self.jobs {
            // Ignore failure: the global pool can only be set once (tests).
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global();
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::States(args) => {
            args.configure_jobs();
            let spec = args.load_spec(Some("states"))?;
            commands::cmd_states(&spec, &args.out)
        }
        Command::Trajectory(args) => {
            args.configure_jobs();
            let spec = args.load_spec(None)?;
            commands::cmd_trajectory(&spec, &args.out, false)
        }
        Command::Phasespace(args) => {
            args.configure_jobs();
            let spec = args.load_spec(None)?;
            commands::cmd_trajectory(&spec, &args.out, true)
        }
        Command::Lyapunov(args) => {
            args.configure_jobs();
            let spec = args.load_spec(None)?;
            commands::cmd_lyapunov(&spec, &args.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are success; real usage errors exit 1.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
