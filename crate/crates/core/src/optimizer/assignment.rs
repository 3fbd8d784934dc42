//! All-or-nothing initial assignment on free-flow region travel times.

use crate::control::ControlTrajectory;
use crate::error::{Error, Result};
use crate::scenario::{Network, RouteOption, Routing};

/// Option list of a (node, class) pair; None when the class never routes
/// through the node.
pub(crate) fn options_at(net: &Network, node: usize, class: usize) -> Option<Vec<RouteOption>> {
    match net.routing_at(node, class) {
        Routing::Absent => None,
        Routing::Forced(opt) => Some(vec![opt]),
        Routing::Free { block } => Some(net.blocks[block].options.clone()),
    }
}

/// Free-flow traversal time per node: the inverse outflow-demand slope at
/// zero accumulation. Buffers get their near-empty discharge constant.
pub fn free_flow_times(net: &Network) -> Vec<f64> {
    net.nodes.iter().map(|node| 1.0 / node.demand_slope(0.0)).collect()
}

/// Remaining free-flow travel time per node for one class, counting each
/// downstream region's traversal and ending at the first exit taken.
/// Infinite where the class cannot reach its destination.
pub fn free_flow_cost_to_go(net: &Network, class: usize) -> Vec<f64> {
    let theta = free_flow_times(net);
    let n = net.n_nodes();
    let mut ctg = vec![f64::INFINITY; n];
    // Bellman relaxation; path lengths are bounded by the node count.
    for _ in 0..=n {
        for i in 0..n {
            let Some(opts) = options_at(net, i, class) else { continue };
            let mut best = f64::INFINITY;
            for opt in opts {
                let cost = match opt {
                    RouteOption::Exit(_) => 0.0,
                    RouteOption::Edge(e) => {
                        let j = net.edges[e].to;
                        theta[j] + ctg[j]
                    }
                };
                best = best.min(cost);
            }
            if best < ctg[i] {
                ctg[i] = best;
            }
        }
    }
    ctg
}

/// All-or-nothing control: every routing block follows the free-flow
/// shortest path, and each departure profile is a pulse (optionally spread
/// by `spread` seconds to each side) timed to arrive at the desired instant
/// under free-flow travel times, clipped to the departure horizon.
pub fn initial_assignment(net: &Network, spread: f64) -> Result<ControlTrajectory> {
    let theta = free_flow_times(net);
    let mut ctg_by_class = Vec::with_capacity(net.n_classes());
    for c in 0..net.n_classes() {
        ctg_by_class.push(free_flow_cost_to_go(net, c));
    }

    let mut routing = vec![0.0; net.n_steps * net.routing_stride];
    for block in &net.blocks {
        let ctg = &ctg_by_class[block.class];
        let mut best_slot = 0;
        let mut best_cost = f64::INFINITY;
        for (s, opt) in block.options.iter().enumerate() {
            let cost = match *opt {
                RouteOption::Exit(_) => 0.0,
                RouteOption::Edge(e) => {
                    let j = net.edges[e].to;
                    theta[j] + ctg[j]
                }
            };
            if cost < best_cost {
                best_cost = cost;
                best_slot = s;
            }
        }
        for k in 0..net.n_steps {
            routing[k * net.routing_stride + block.offset + best_slot] = 1.0;
        }
    }

    let mut departures = Vec::with_capacity(net.demand_rows.len());
    for row in &net.demand_rows {
        let path_time = ctg_by_class[row.class][row.origin_node];
        if !path_time.is_finite() {
            return Err(Error::Invalid(format!(
                "no route from {} for its destination",
                net.region_name(row.origin_node)
            )));
        }
        let center = net.classes[row.class].arrival_time - path_time;
        let (lo, hi) = (center - spread, center + spread);
        let mut weights = vec![0.0; net.horizon_steps];
        for (k, w) in weights.iter_mut().enumerate() {
            let a = (k as f64 * net.dt).max(lo);
            let b = ((k + 1) as f64 * net.dt).min(hi);
            *w = (b - a).max(0.0);
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            // Pulse outside the horizon: clamp to the nearest step.
            let k = (center / net.dt).floor().clamp(0.0, (net.horizon_steps - 1) as f64);
            weights[k as usize] = 1.0;
        }
        let mass: f64 = weights.iter().sum::<f64>() * net.dt;
        departures.push(weights.iter().map(|w| w * row.total / mass).collect());
    }

    let ctrl = ControlTrajectory { routing, departures };
    ctrl.check_feasible(net, 1e-9)?;
    Ok(ctrl)
}
