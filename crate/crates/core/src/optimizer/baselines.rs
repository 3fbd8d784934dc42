//! Benchmark heuristics over the same control parameterization as the
//! gradient solver: successive averaging toward an all-or-nothing best
//! response, and proportional mass shifts driven by relative cost gaps.

use std::time::Instant;

use crate::control::ControlTrajectory;
use crate::dynamics::simulate_forward;
use crate::error::Result;
use crate::objective::{total_cost, CostBreakdown};
use crate::projection::project_controls;
use crate::scenario::Network;

use super::skim::{argmin, best_response, experienced_cost_to_go, option_costs, travel_times};
use super::{IterationLog, OptimizeResult};

fn push_log(
    log: &mut Vec<IterationLog>,
    tau: usize,
    cost: &CostBreakdown,
    step: f64,
    t_iter: Instant,
) {
    log.push(IterationLog {
        iteration: tau,
        total: cost.total,
        tts: cost.tts,
        tac: cost.tac,
        tc: cost.tc,
        step_size: step,
        grad_norm: 0.0,
        wall_ms: t_iter.elapsed().as_secs_f64() * 1e3,
    });
}

/// Method of successive averages: blend the iterate with an all-or-nothing
/// best response using weight 1/(tau + 2). Convexity keeps every iterate
/// feasible without projection.
pub fn msa_baseline(
    net: &Network,
    start: &ControlTrajectory,
    iters: usize,
) -> Result<OptimizeResult> {
    let mut ctrl = project_controls(net, start);
    let mut best: Option<(CostBreakdown, ControlTrajectory)> = None;
    let mut log = Vec::new();

    for tau in 0..iters {
        let t_iter = Instant::now();
        let traj = simulate_forward(net, &ctrl)?;
        let cost = total_cost(net, &traj);
        if best.as_ref().map_or(true, |(c, _)| cost.total < c.total) {
            best = Some((cost.clone(), ctrl.clone()));
        }
        let w = 1.0 / (tau as f64 + 2.0);
        push_log(&mut log, tau, &cost, w, t_iter);

        let aux = best_response(net, &traj)?;
        for (x, y) in ctrl.routing.iter_mut().zip(&aux.routing) {
            *x = (1.0 - w) * *x + w * y;
        }
        for (rates, aux_rates) in ctrl.departures.iter_mut().zip(&aux.departures) {
            for (x, y) in rates.iter_mut().zip(aux_rates) {
                *x = (1.0 - w) * *x + w * y;
            }
        }
    }

    let (cost, control) = best.expect("iters >= 1");
    Ok(OptimizeResult { control, cost, log, stationarity: f64::NAN })
}

/// Gap-based reassignment: move mass away from each alternative in
/// proportion to its relative cost gap against the cheapest one, with a
/// diminishing move fraction 1/(tau + 1).
pub fn gap_baseline(
    net: &Network,
    start: &ControlTrajectory,
    iters: usize,
) -> Result<OptimizeResult> {
    let n = net.n_nodes();
    let mut ctrl = project_controls(net, start);
    let mut best: Option<(CostBreakdown, ControlTrajectory)> = None;
    let mut log = Vec::new();

    for tau in 0..iters {
        let t_iter = Instant::now();
        let traj = simulate_forward(net, &ctrl)?;
        let cost = total_cost(net, &traj);
        if best.as_ref().map_or(true, |(c, _)| cost.total < c.total) {
            best = Some((cost.clone(), ctrl.clone()));
        }
        let eta = 0.2 / (tau as f64 + 1.0);
        push_log(&mut log, tau, &cost, eta, t_iter);

        let theta = travel_times(net, &traj);
        for class in 0..net.n_classes() {
            let blocks: Vec<usize> = (0..net.blocks.len())
                .filter(|&b| net.blocks[b].class == class)
                .collect();
            let rows: Vec<usize> = (0..net.demand_rows.len())
                .filter(|&r| net.demand_rows[r].class == class)
                .collect();
            if blocks.is_empty() && rows.is_empty() {
                continue;
            }
            let ctg = experienced_cost_to_go(net, &theta, class);

            for &b in &blocks {
                let block = &net.blocks[b];
                for k in 0..net.n_steps {
                    let costs = option_costs(net, &ctg, class, &block.options, k);
                    let slice = &mut ctrl.routing
                        [k * net.routing_stride + block.offset..][..block.options.len()];
                    shift_mass(slice, &costs, eta);
                }
            }
            for &r in &rows {
                let row = &net.demand_rows[r];
                let costs: Vec<f64> = (0..net.horizon_steps)
                    .map(|k| ctg[k * n + row.origin_node])
                    .collect();
                shift_mass(&mut ctrl.departures[r], &costs, eta);
            }
        }
        // The shifts conserve mass exactly; projection only clears
        // floating-point drift.
        ctrl = project_controls(net, &ctrl);
    }

    let (cost, control) = best.expect("iters >= 1");
    Ok(OptimizeResult { control, cost, log, stationarity: f64::NAN })
}

/// Moves from each alternative toward the cheapest a fraction
/// eta * (cost - min) / mean-experienced-cost of its mass, capped at all
/// of it. No-op when every used alternative already sits at the minimum.
pub(crate) fn shift_mass(mass: &mut [f64], costs: &[f64], eta: f64) {
    let cheapest = argmin(costs);
    let c_min = costs[cheapest];
    let held: f64 = mass.iter().sum();
    if held <= 0.0 {
        return;
    }
    let mean: f64 = mass.iter().zip(costs).map(|(m, c)| m * c).sum::<f64>() / held;
    let denom = (mean - c_min).max(mean.abs() * 1e-12).max(1e-12);
    let mut moved = 0.0;
    for (s, m) in mass.iter_mut().enumerate() {
        if s == cheapest || !costs[s].is_finite() {
            continue;
        }
        let frac = (eta * (costs[s] - c_min) / denom).clamp(0.0, 1.0);
        let delta = *m * frac;
        *m -= delta;
        moved += delta;
    }
    mass[cheapest] += moved;
}
