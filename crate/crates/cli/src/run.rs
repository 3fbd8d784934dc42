//! Command dispatch: scenario loading, override application and artifact
//! emission for every pipeline.

use std::path::PathBuf;
use std::time::Instant;

use clap::ValueEnum;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use mfd_dso_core::adjoint::{control_gradient, fd_gradient, ControlComponent, FdError};
use mfd_dso_core::control::ControlTrajectory;
use mfd_dso_core::dynamics::simulate_forward;
use mfd_dso_core::objective::total_cost;
use mfd_dso_core::optimizer::{
    gap_baseline, initial_assignment, msa_baseline, optimize, OptimizeResult, OptimizerConfig,
};
use mfd_dso_core::projection::project_nonneg_sum;
use mfd_dso_core::scenario::{
    eight_region::eight_region, FlowModel, Network, OriginModel, ScenarioConfig,
};
use mfd_dso_core::{Error, Result};

use crate::report;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Optimize,
    #[value(name = "baseline:msa")]
    BaselineMsa,
    #[value(name = "baseline:gap")]
    BaselineGap,
    Gradcheck,
    Projcheck,
    Emit,
}

/// Resolved invocation: command, scenario source and typed overrides.
pub struct RunManifest {
    pub command: Command,
    pub scenario: Option<PathBuf>,
    pub out: PathBuf,
    pub scale: Option<f64>,
    pub iters: Option<usize>,
    pub dt: Option<f64>,
    pub seed: u64,
    pub flow_model: Option<FlowModel>,
    pub origin_model: Option<OriginModel>,
    pub spread: Option<f64>,
    pub alpha0: Option<f64>,
    pub write_trajectory: bool,
}

impl RunManifest {
    fn load_scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.scenario {
            Some(path) => ScenarioConfig::from_file(path)?,
            None if self.command == Command::Emit => eight_region(),
            None => {
                return Err(Error::Invalid(
                    "--scenario is required for this command".into(),
                ))
            }
        };
        if let Some(factor) = self.scale {
            if !(factor > 0.0) {
                return Err(Error::Invalid(format!("invalid --scale {factor}")));
            }
            cfg.scale(factor);
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Invalid(format!("invalid --dt {dt}")));
            }
            cfg.dt = dt;
        }
        if let Some(fm) = self.flow_model {
            cfg.flow_model = fm;
        }
        if let Some(om) = self.origin_model {
            cfg.origin_model = om;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Half-width of the common initial departure spread: half the span of
    /// the desired-arrival slots unless overridden.
    fn spread(&self, net: &Network) -> f64 {
        self.spread.unwrap_or_else(|| {
            let lo = net.arrival_times.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = net.arrival_times.iter().copied().fold(0.0f64, f64::max);
            ((hi - lo) / 2.0).max(0.0)
        })
    }
}

pub fn run_command(manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(&manifest.out)?;
    match manifest.command {
        Command::Emit => emit(manifest),
        Command::Simulate => simulate(manifest),
        Command::Optimize => iterate(manifest, "so"),
        Command::BaselineMsa => iterate(manifest, "msa"),
        Command::BaselineGap => iterate(manifest, "gap"),
        Command::Gradcheck => gradcheck(manifest),
        Command::Projcheck => projcheck(manifest),
    }
}

fn emit(manifest: &RunManifest) -> Result<()> {
    let cfg = manifest.load_scenario()?;
    let path = manifest.out.join("scenario.json");
    cfg.write_file(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate(manifest: &RunManifest) -> Result<()> {
    let cfg = manifest.load_scenario()?;
    let net = Network::compile(&cfg)?;
    let ctrl = ControlTrajectory::uniform(&net);
    let t0 = Instant::now();
    let traj = simulate_forward(&net, &ctrl)?;
    let cost = total_cost(&net, &traj);
    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;

    let log = report::single_row_log(&cost, wall_ms);
    report::write_convergence(&manifest.out.join("convergence.csv"), "simulate", &log)?;
    report::write_metrics(
        &manifest.out.join("metrics.csv"),
        &report::region_metrics(&net, &traj),
    )?;
    if manifest.write_trajectory {
        report::write_trajectory(&manifest.out.join("trajectory.csv"), &net, &traj)?;
    }
    println!(
        "J = {} (TTS {} TAC {} TC {}), {} of {} vehicles arrived",
        cost.total, cost.tts, cost.tac, cost.tc, traj.cum_arrived, traj.cum_departed
    );
    Ok(())
}

fn iterate(manifest: &RunManifest, algorithm: &str) -> Result<()> {
    let cfg = manifest.load_scenario()?;
    let net = Network::compile(&cfg)?;
    let iters = manifest.iters.unwrap_or(50).max(1);
    let start = initial_assignment(&net, manifest.spread(&net))?;

    let result: OptimizeResult = match algorithm {
        "so" => {
            let ocfg = OptimizerConfig {
                max_iters: iters,
                alpha0: manifest.alpha0,
                seed: manifest.seed,
                ..Default::default()
            };
            optimize(&net, &start, &ocfg)?
        }
        "msa" => msa_baseline(&net, &start, iters)?,
        "gap" => gap_baseline(&net, &start, iters)?,
        _ => unreachable!("unknown algorithm"),
    };

    report::write_convergence(&manifest.out.join("convergence.csv"), algorithm, &result.log)?;
    let traj = simulate_forward(&net, &result.control)?;
    report::write_metrics(
        &manifest.out.join("metrics.csv"),
        &report::region_metrics(&net, &traj),
    )?;
    if manifest.write_trajectory {
        report::write_trajectory(&manifest.out.join("trajectory.csv"), &net, &traj)?;
    }
    println!(
        "{algorithm}: J {} -> {} in {} iterations (stationarity {})",
        result.log.first().map_or(f64::NAN, |r| r.total),
        result.cost.total,
        result.log.len(),
        result.stationarity
    );
    Ok(())
}

fn gradcheck(manifest: &RunManifest) -> Result<()> {
    let cfg = manifest.load_scenario()?;
    let net = Network::compile(&cfg)?;
    let ctrl = ControlTrajectory::uniform(&net);
    let traj = simulate_forward(&net, &ctrl)?;
    let (_, grad) = control_gradient(&net, &traj, &ctrl)?;

    let samples = manifest.iters.unwrap_or(60);
    // Central differences lose J * eps / (2h) to round-off; pick h so that
    // loss stays a few orders below typical gradient entries.
    let j0 = total_cost(&net, &traj).total;
    let fd_step = (j0.abs().max(1.0) * 1e-16).cbrt().clamp(1e-4, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let mut rows = String::from("component,analytic,fd,abs_err,rel_err\n");
    let mut worst_rel = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for _ in 0..samples {
        let (comp, h, analytic) = if net.routing_stride > 0 && rng.gen_bool(0.5) {
            let k = rng.gen_range(0..net.n_steps);
            let block = rng.gen_range(0..net.blocks.len());
            let slot = rng.gen_range(0..net.blocks[block].options.len());
            let idx = k * net.routing_stride + net.blocks[block].offset + slot;
            (ControlComponent::Routing { k, block, slot }, fd_step, grad.routing[idx])
        } else {
            let row = rng.gen_range(0..net.demand_rows.len());
            let k = rng.gen_range(0..net.horizon_steps);
            (ControlComponent::Departure { row, k }, fd_step, grad.departures[row][k])
        };
        match fd_gradient(&net, &ctrl, comp, h) {
            Ok(fd) => {
                checked += 1;
                let abs = (analytic - fd).abs();
                let rel = abs / fd.abs().max(1e-12);
                if fd.abs() >= 1e-3 {
                    worst_rel = worst_rel.max(rel);
                } else {
                    worst_abs = worst_abs.max(abs);
                }
                rows.push_str(&format!("{comp:?},{analytic},{fd},{abs},{rel}\n"));
            }
            Err(FdError::Nonsmooth) => skipped += 1,
            Err(FdError::Sim(e)) => return Err(e),
        }
    }
    std::fs::write(manifest.out.join("gradcheck.csv"), rows)?;
    println!(
        "gradcheck: {checked} components checked, {skipped} nonsmooth skipped, \
         max rel err {worst_rel:.3e}, max abs err (small grads) {worst_abs:.3e}"
    );
    if worst_rel > 1e-3 || worst_abs > 1e-4 {
        return Err(Error::Invalid(format!(
            "gradient check failed: rel {worst_rel:.3e}, abs {worst_abs:.3e}"
        )));
    }
    Ok(())
}

/// Brute-force active-set reference for the simplex/budget projection.
fn projection_oracle(g: &[f64], budget: f64) -> Vec<f64> {
    let n = g.len();
    let mut indices: Vec<usize> = (0..n).collect();
    indices.sort_by(|&a, &b| g[b].partial_cmp(&g[a]).unwrap());
    // Try every support size over the ranked coordinates and keep the KKT
    // consistent one.
    for len in (1..=n).rev() {
        let support = &indices[..len];
        let sum: f64 = support.iter().map(|&i| g[i]).sum();
        let zeta = (budget - sum) / len as f64;
        let feasible = support.iter().all(|&i| g[i] + zeta >= -1e-13);
        let optimal = indices[len..].iter().all(|&i| g[i] + zeta <= 1e-13);
        if feasible && optimal {
            let mut x = vec![0.0; n];
            for &i in support {
                x[i] = (g[i] + zeta).max(0.0);
            }
            return x;
        }
    }
    unreachable!("no KKT-consistent support");
}

fn projcheck(manifest: &RunManifest) -> Result<()> {
    let samples = manifest.iters.unwrap_or(10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let mut worst = 0.0f64;
    for s in 0..samples {
        let dim = rng.gen_range(2..=16);
        let tie = s % 4 == 0;
        let g: Vec<f64> = (0..dim)
            .map(|i| {
                if tie && i % 2 == 0 {
                    1.0
                } else {
                    rng.gen_range(-2.0..2.0)
                }
            })
            .collect();
        let budget = rng.gen_range(0.1..3.0);
        let ours = project_nonneg_sum(&g, budget);
        let reference = projection_oracle(&g, budget);
        for (a, b) in ours.iter().zip(&reference) {
            worst = worst.max((a - b).abs());
        }
    }
    std::fs::write(
        manifest.out.join("projcheck.csv"),
        format!("samples,max_abs_err\n{samples},{worst}\n"),
    )?;
    println!("projcheck: {samples} projections, max componentwise error {worst:.3e}");
    if worst > 1e-10 {
        return Err(Error::Invalid(format!("projection check failed: {worst:.3e}")));
    }
    Ok(())
}
