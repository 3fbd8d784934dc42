//! mfd-dso: simulate, optimize and benchmark regional MFD scenarios.
//!
//! Exit codes: 0 success, 2 scenario validation failure, 3 CFL or runtime
//! fault, 4 i/o error.

mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mfd_dso_core::Error;

use run::{Command, RunManifest};

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FlowModelArg {
    Strada,
    Kkt,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum OriginModelArg {
    Buffer,
    Queue,
}

#[derive(Parser, Debug)]
#[command(name = "mfd-dso", version, about = "Regional MFD dynamic system optimum toolkit")]
struct Cli {
    /// Pipeline to run.
    #[arg(value_enum)]
    command: Command,

    /// Scenario file (JSON). Optional for `emit`, which uses the built-in
    /// 8-region scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,

    /// Output directory for CSV artifacts; created if missing.
    #[arg(long)]
    out: PathBuf,

    /// Rescale total trips and all rate parameters by this factor.
    #[arg(long)]
    scale: Option<f64>,

    /// Iteration budget for the iterative commands, sample count for the
    /// check commands.
    #[arg(long)]
    iters: Option<usize>,

    /// Override the scenario time step (s).
    #[arg(long)]
    dt: Option<f64>,

    /// RNG seed for the check commands.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, value_enum)]
    flow_model: Option<FlowModelArg>,

    #[arg(long, value_enum)]
    origin_model: Option<OriginModelArg>,

    /// Half-width (s) of the initial departure spread; defaults to half the
    /// span of the desired-arrival slots.
    #[arg(long)]
    spread: Option<f64>,

    /// Base step size for the projected-gradient solver; probed when absent.
    #[arg(long)]
    alpha0: Option<f64>,

    /// Also write trajectory.csv (per-step region accumulations).
    #[arg(long, default_value_t = false)]
    trajectory: bool,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Validation(findings) => {
            if findings.iter().any(|f| f.contains("CFL")) {
                3
            } else {
                2
            }
        }
        Error::Io(_) => 4,
        Error::Parse(_) => 2,
        Error::Cfl { .. } | Error::Conservation { .. } => 3,
        // Failed numeric self-checks are runtime faults, not bad input.
        Error::Invalid(msg) if msg.contains("check failed") => 3,
        Error::Invalid(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let manifest = RunManifest {
        command: cli.command,
        scenario: cli.scenario,
        out: cli.out,
        scale: cli.scale,
        iters: cli.iters,
        dt: cli.dt,
        seed: cli.seed,
        flow_model: cli.flow_model.map(|m| match m {
            FlowModelArg::Strada => mfd_dso_core::scenario::FlowModel::Strada,
            FlowModelArg::Kkt => mfd_dso_core::scenario::FlowModel::KktOptimization,
        }),
        origin_model: cli.origin_model.map(|m| match m {
            OriginModelArg::Buffer => mfd_dso_core::scenario::OriginModel::Buffer,
            OriginModelArg::Queue => mfd_dso_core::scenario::OriginModel::HomogeneousQueue,
        }),
        spread: cli.spread,
        alpha0: cli.alpha0,
        write_trajectory: cli.trajectory,
    };
    match run::run_command(&manifest) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("mfd-dso: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
