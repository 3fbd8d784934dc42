//! Experienced-cost skims over a simulated trajectory and the
//! all-or-nothing best response built on them. Both baselines price a
//! node's traversal at N / Delta(N) using the accumulations the current
//! control actually produced.

use crate::control::ControlTrajectory;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::objective::arrival_penalty;
use crate::optimizer::assignment::options_at;
use crate::scenario::{Network, RouteOption};

/// Instantaneous traversal times, step-major: entry (k, node) ->
/// N(k) / Delta(N(k)), falling back to the free-flow time when empty.
pub fn travel_times(net: &Network, traj: &Trajectory) -> Vec<f64> {
    let n = net.n_nodes();
    let mut theta = vec![0.0; net.n_steps * n];
    for k in 0..net.n_steps {
        for (i, node) in net.nodes.iter().enumerate() {
            let acc = traj.node_total_at(net, k, i);
            theta[k * n + i] = if acc > 1e-9 {
                acc / node.demand(acc)
            } else {
                1.0 / node.demand_slope(0.0)
            };
        }
    }
    theta
}

/// Generalized cost-to-go of one class: entry (k, node) -> weighted time
/// plus schedule-delay penalty until trip completion, using `theta` from
/// `travel_times`. Layout (K+1) x nodes; infinite where the class cannot
/// route.
pub fn experienced_cost_to_go(
    net: &Network,
    theta: &[f64],
    class: usize,
) -> Vec<f64> {
    let n = net.n_nodes();
    let k_max = net.n_steps;
    let info = &net.classes[class];
    let mut ctg = vec![f64::INFINITY; (k_max + 1) * n];

    for k in (0..=k_max).rev() {
        // Steps below k_max only reference strictly later entries (the
        // traversal takes at least one step); the frozen boundary row needs
        // relaxation because it references itself.
        let rounds = if k == k_max { n } else { 1 };
        for _ in 0..rounds {
            for i in 0..n {
                let Some(opts) = options_at(net, i, class) else { continue };
                let th = theta[k.min(k_max - 1) * n + i];
                let t_exit = k as f64 * net.dt + th;
                let k2 = (k + ((th / net.dt).round() as usize).max(1)).min(k_max);
                let mut best = f64::INFINITY;
                for opt in opts {
                    let cost = match opt {
                        RouteOption::Exit(_) => {
                            info.arrival_weight * arrival_penalty(net, info.arrival_time, t_exit)
                        }
                        RouteOption::Edge(e) => ctg[k2 * n + net.edges[e].to],
                    };
                    best = best.min(cost);
                }
                let total = net.nodes[i].tts_weight * th + best;
                if total < ctg[k * n + i] {
                    ctg[k * n + i] = total;
                }
            }
        }
    }
    ctg
}

/// Cost of the routing options of a block for mass leaving the node at
/// step k: exiting prices the arrival now, an edge prices entering the
/// target region now.
pub(crate) fn option_costs(
    net: &Network,
    ctg: &[f64],
    class: usize,
    options: &[RouteOption],
    k: usize,
) -> Vec<f64> {
    let n = net.n_nodes();
    let info = &net.classes[class];
    options
        .iter()
        .map(|opt| match *opt {
            RouteOption::Exit(_) => {
                info.arrival_weight * arrival_penalty(net, info.arrival_time, k as f64 * net.dt)
            }
            RouteOption::Edge(e) => ctg[k * n + net.edges[e].to],
        })
        .collect()
}

/// All-or-nothing auxiliary control toward the currently cheapest routes
/// and departure slots, as experienced under `traj`.
pub fn best_response(net: &Network, traj: &Trajectory) -> Result<ControlTrajectory> {
    let n = net.n_nodes();
    let theta = travel_times(net, traj);
    let mut routing = vec![0.0; net.n_steps * net.routing_stride];
    let mut departures: Vec<Vec<f64>> = net
        .demand_rows
        .iter()
        .map(|_| vec![0.0; net.horizon_steps])
        .collect();

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
                let best = argmin(&costs);
                routing[k * net.routing_stride + block.offset + best] = 1.0;
            }
        }
        for &r in &rows {
            let row = &net.demand_rows[r];
            let mut best_k = 0;
            let mut best_cost = f64::INFINITY;
            for k in 0..net.horizon_steps {
                let cost = ctg[k * n + row.origin_node];
                if cost < best_cost {
                    best_cost = cost;
                    best_k = k;
                }
            }
            if !best_cost.is_finite() {
                return Err(Error::Invalid(format!(
                    "no experienced route from {}",
                    net.region_name(row.origin_node)
                )));
            }
            departures[r][best_k] = row.total / net.dt;
        }
    }

    let ctrl = ControlTrajectory { routing, departures };
    ctrl.check_feasible(net, 1e-9)?;
    Ok(ctrl)
}

pub(crate) fn argmin(costs: &[f64]) -> usize {
    let mut best = 0;
    for (s, &c) in costs.iter().enumerate() {
        if c < costs[best] {
            best = s;
        }
    }
    best
}
