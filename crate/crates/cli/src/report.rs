//! CSV artifact writers and the per-region metrics table.

use std::fs;
use std::path::Path;

use mfd_dso_core::dynamics::Trajectory;
use mfd_dso_core::objective::CostBreakdown;
use mfd_dso_core::optimizer::IterationLog;
use mfd_dso_core::scenario::{Network, NodeCurve};
use mfd_dso_core::Result;

pub const CONVERGENCE_HEADER: &str =
    "algorithm,iteration,J,TTS,TAC,TC,step_size,grad_norm,wall_ms";
pub const METRICS_HEADER: &str = "region,max_accumulation,avg_speed_mps";
pub const TRAJECTORY_HEADER: &str = "step,time_s,region,accumulation";

pub struct RegionMetrics {
    pub region: String,
    pub max_accumulation: f64,
    pub avg_speed: f64,
}

/// Per-region peak accumulation and accumulation-weighted mean speed over
/// the occupied steps; empty regions report the free-flow speed.
pub fn region_metrics(net: &Network, traj: &Trajectory) -> Vec<RegionMetrics> {
    let mut out = Vec::with_capacity(net.n_regions);
    for i in 0..net.n_regions {
        let NodeCurve::Mfd(curve) = net.nodes[i].curve else { continue };
        let mut max_acc = 0.0f64;
        let mut weighted = 0.0;
        let mut weight = 0.0;
        for k in 0..=net.n_steps {
            let n = traj.node_total_at(net, k, i);
            max_acc = max_acc.max(n);
            if n > 0.0 {
                weighted += n * curve.speed(n);
                weight += n;
            }
        }
        let avg_speed = if weight > 0.0 { weighted / weight } else { curve.speed(0.0) };
        out.push(RegionMetrics {
            region: net.region_name(i).to_string(),
            max_accumulation: max_acc,
            avg_speed,
        });
    }
    out
}

pub fn write_convergence(path: &Path, algorithm: &str, log: &[IterationLog]) -> Result<()> {
    let mut text = String::from(CONVERGENCE_HEADER);
    text.push('\n');
    for row in log {
        text.push_str(&format!(
            "{algorithm},{},{},{},{},{},{},{},{}\n",
            row.iteration,
            row.total,
            row.tts,
            row.tac,
            row.tc,
            row.step_size,
            row.grad_norm,
            row.wall_ms
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

/// A simulate run is logged as a single pseudo-iteration so the convergence
/// schema stays uniform across commands.
pub fn single_row_log(cost: &CostBreakdown, wall_ms: f64) -> Vec<IterationLog> {
    vec![IterationLog {
        iteration: 0,
        total: cost.total,
        tts: cost.tts,
        tac: cost.tac,
        tc: cost.tc,
        step_size: 0.0,
        grad_norm: 0.0,
        wall_ms,
    }]
}

pub fn write_metrics(path: &Path, metrics: &[RegionMetrics]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for m in metrics {
        text.push_str(&format!("{},{},{}\n", m.region, m.max_accumulation, m.avg_speed));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_trajectory(path: &Path, net: &Network, traj: &Trajectory) -> Result<()> {
    let mut text = String::from(TRAJECTORY_HEADER);
    text.push('\n');
    for k in 0..=net.n_steps {
        let t = k as f64 * net.dt;
        for i in 0..net.n_regions {
            text.push_str(&format!(
                "{k},{t},{},{}\n",
                net.region_name(i),
                traj.node_total_at(net, k, i)
            ));
        }
    }
    fs::write(path, text)?;
    Ok(())
}
