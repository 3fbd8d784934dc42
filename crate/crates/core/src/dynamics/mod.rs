//! Forward simulation: class-disaggregated accumulation dynamics on the
//! compiled network, with either min-based (per-edge split) or merge-based
//! transfer flows.

mod merge;

pub use merge::{MergeProblem, MergeSolution};

use crate::control::ControlTrajectory;
use crate::error::{Error, Result};
use crate::scenario::{FlowModel, Network, NodeKind, OriginModel, RouteOption, Routing};

/// Class-disaggregated accumulations, `n[node * n_classes + class]` veh.
#[derive(Clone, Debug, PartialEq)]
pub struct DisaggState {
    pub n: Vec<f64>,
}

impl DisaggState {
    pub fn empty(net: &Network) -> Self {
        DisaggState { n: vec![0.0; net.n_nodes() * net.n_classes()] }
    }

    pub fn node_total(&self, net: &Network, node: usize) -> f64 {
        let c = net.n_classes();
        self.n[node * c..(node + 1) * c].iter().sum()
    }
}

/// Regime bookkeeping of one step, used for gradient case analysis and for
/// detecting regime flips between finite-difference probes.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFlags {
    pub edge_supply_bound: Vec<bool>,
    pub exit_supply_bound: Vec<bool>,
    pub node_empty: Vec<bool>,
    /// Demand curve saturated (accumulation at or above the threshold).
    pub demand_capped: Vec<bool>,
    /// 0: flat branch, 1: decreasing branch, 2: zero (jammed).
    pub supply_branch: Vec<u8>,
}

/// All flow quantities of one step.
#[derive(Clone, Debug)]
pub struct FlowField {
    pub node_total: Vec<f64>,
    /// Travel demand per node (veh/s); queue origins include the inflow term.
    pub node_demand: Vec<f64>,
    pub node_supply: Vec<f64>,
    /// Class composition weights per (node, class).
    pub weights: Vec<f64>,
    pub edge_demand: Vec<f64>,
    pub edge_flow: Vec<f64>,
    pub exit_demand: Vec<f64>,
    pub exit_flow: Vec<f64>,
    pub flags: StepFlags,
}

/// Full forward run. Flow and arrival entries are rates (veh/s) effective
/// over step k; `states` has `n_steps + 1` snapshots.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub arrivals: Vec<f64>,
    pub edge_flows: Vec<f64>,
    pub exit_flows: Vec<f64>,
    pub flags: Vec<StepFlags>,
    pub stage_tts: Vec<f64>,
    pub stage_tac: Vec<f64>,
    pub cum_departed: f64,
    pub cum_arrived: f64,
    state_stride: usize,
}

impl Trajectory {
    pub fn state_at(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_stride..(k + 1) * self.state_stride]
    }

    pub fn node_total_at(&self, net: &Network, k: usize, node: usize) -> f64 {
        let c = net.n_classes();
        self.state_at(k)[node * c..(node + 1) * c].iter().sum()
    }

    pub fn arrivals_at(&self, net: &Network, k: usize) -> &[f64] {
        let c = net.n_classes();
        &self.arrivals[k * c..(k + 1) * c]
    }

    pub fn edge_flows_at(&self, net: &Network, k: usize) -> &[f64] {
        let e = net.edges.len();
        &self.edge_flows[k * e..(k + 1) * e]
    }

    pub fn exit_flows_at(&self, net: &Network, k: usize) -> &[f64] {
        let x = net.exits.len();
        &self.exit_flows[k * x..(k + 1) * x]
    }

    /// Vehicles still inside the network after the last step.
    pub fn residual(&self) -> f64 {
        self.states[self.states.len() - self.state_stride..].iter().sum()
    }
}

/// Per-(node, class) departure rates of one step.
fn departure_field(net: &Network, ctrl: &ControlTrajectory, k: usize, dep: &mut [f64]) {
    dep.fill(0.0);
    if k >= net.horizon_steps {
        return;
    }
    let c = net.n_classes();
    for (r, row) in net.demand_rows.iter().enumerate() {
        dep[row.origin_node * c + row.class] += ctrl.departure_rate(r, k);
    }
}

/// Iterates the routing options of (node, class) with their coefficients.
fn for_each_option<F: FnMut(RouteOption, f64)>(
    net: &Network,
    routing_slice: &[f64],
    node: usize,
    class: usize,
    mut f: F,
) {
    match net.routing_at(node, class) {
        Routing::Absent => {}
        Routing::Forced(opt) => f(opt, 1.0),
        Routing::Free { block } => {
            let b = &net.blocks[block];
            for (s, &opt) in b.options.iter().enumerate() {
                f(opt, routing_slice[b.offset + s]);
            }
        }
    }
}

/// Computes all demands, supplies and transfer flows for one step.
pub fn compute_flows(
    net: &Network,
    state: &[f64],
    routing_slice: &[f64],
    dep: &[f64],
) -> FlowField {
    let nn = net.n_nodes();
    let c = net.n_classes();
    let dt = net.dt;

    let mut node_total = vec![0.0; nn];
    for i in 0..nn {
        node_total[i] = state[i * c..(i + 1) * c].iter().sum();
    }

    // Composition weights and node travel demands.
    let mut weights = vec![0.0; nn * c];
    let mut node_demand = vec![0.0; nn];
    let mut node_supply = vec![f64::INFINITY; nn];
    for i in 0..nn {
        let queue_origin = matches!(net.nodes[i].kind, NodeKind::Origin { .. })
            && net.origin_model == OriginModel::HomogeneousQueue;
        if queue_origin {
            let dep_total: f64 = dep[i * c..(i + 1) * c].iter().sum();
            let denom = dep_total * dt + node_total[i];
            if denom > 0.0 {
                for cc in 0..c {
                    weights[i * c + cc] = (dep[i * c + cc] * dt + state[i * c + cc]) / denom;
                }
            }
            node_demand[i] = dep_total + node_total[i] / dt;
        } else {
            if node_total[i] > 0.0 {
                for cc in 0..c {
                    weights[i * c + cc] = state[i * c + cc] / node_total[i];
                }
            }
            node_demand[i] = net.nodes[i].demand(node_total[i].max(0.0));
        }
        if i < net.n_regions {
            node_supply[i] = net.nodes[i].supply(node_total[i].max(0.0));
        }
    }

    // Partial demands per transfer edge and exit.
    let mut edge_demand = vec![0.0; net.edges.len()];
    let mut exit_demand = vec![0.0; net.exits.len()];
    for i in 0..nn {
        if node_demand[i] <= 0.0 {
            continue;
        }
        for cc in 0..c {
            let w = weights[i * c + cc];
            if w <= 0.0 {
                continue;
            }
            let contrib = node_demand[i] * w;
            for_each_option(net, routing_slice, i, cc, |opt, gamma| {
                if gamma > 0.0 {
                    match opt {
                        RouteOption::Edge(e) => edge_demand[e] += contrib * gamma,
                        RouteOption::Exit(x) => exit_demand[x] += contrib * gamma,
                    }
                }
            });
        }
    }

    // Transfer flows.
    let mut edge_flow = vec![0.0; net.edges.len()];
    let mut exit_flow = vec![0.0; net.exits.len()];
    let mut edge_supply_bound = vec![false; net.edges.len()];
    let mut exit_supply_bound = vec![false; net.exits.len()];
    match net.flow_model {
        FlowModel::Strada => {
            for (e, edge) in net.edges.iter().enumerate() {
                let partial_supply = edge.beta * node_supply[edge.to];
                if partial_supply <= edge_demand[e] {
                    edge_flow[e] = partial_supply;
                    edge_supply_bound[e] = true;
                } else {
                    edge_flow[e] = edge_demand[e];
                }
            }
            for (x, exit) in net.exits.iter().enumerate() {
                if exit.supply <= exit_demand[x] {
                    exit_flow[x] = exit.supply;
                    exit_supply_bound[x] = true;
                } else {
                    exit_flow[x] = exit_demand[x];
                }
            }
        }
        FlowModel::KktOptimization => {
            for j in 0..net.n_regions {
                let in_edges = &net.nodes[j].in_edges;
                if in_edges.is_empty() {
                    continue;
                }
                let prob = MergeProblem {
                    demands: in_edges.iter().map(|&e| edge_demand[e]).collect(),
                    caps: in_edges.iter().map(|&e| net.edges[e].cap).collect(),
                    supply: node_supply[j],
                };
                let sol = prob.solve();
                for (slot, &e) in in_edges.iter().enumerate() {
                    edge_flow[e] = sol.flows[slot];
                    edge_supply_bound[e] = edge_flow[e] < edge_demand[e] - 1e-12;
                }
            }
            for (di, _) in net.dests.iter().enumerate() {
                let members: Vec<usize> =
                    (0..net.exits.len()).filter(|&x| {
                        net.dests.iter().position(|&d| d == net.exits[x].dest) == Some(di)
                    }).collect();
                if members.is_empty() {
                    continue;
                }
                let prob = MergeProblem {
                    demands: members.iter().map(|&x| exit_demand[x]).collect(),
                    caps: members.iter().map(|&x| net.exits[x].supply).collect(),
                    supply: net.dest_supply[di],
                };
                let sol = prob.solve();
                for (slot, &x) in members.iter().enumerate() {
                    exit_flow[x] = sol.flows[slot];
                    exit_supply_bound[x] = exit_flow[x] < exit_demand[x] - 1e-12;
                }
            }
        }
    }

    // Regime flags for branch bookkeeping.
    let mut node_empty = vec![false; nn];
    let mut demand_capped = vec![false; nn];
    let mut supply_branch = vec![0u8; nn];
    for i in 0..nn {
        node_empty[i] = node_total[i] <= 0.0;
        match net.nodes[i].curve {
            crate::scenario::NodeCurve::Mfd(curve) => {
                demand_capped[i] = node_total[i] >= curve.critical_accumulation;
                supply_branch[i] = if node_total[i] <= curve.critical_accumulation {
                    0
                } else if node_total[i] < curve.jam_accumulation {
                    1
                } else {
                    2
                };
            }
            crate::scenario::NodeCurve::Buffer(buf) => {
                demand_capped[i] = node_total[i] >= buf.ramp_threshold;
            }
        }
    }

    FlowField {
        node_total,
        node_demand,
        node_supply,
        weights,
        edge_demand,
        edge_flow,
        exit_demand,
        exit_flow,
        flags: StepFlags {
            edge_supply_bound,
            exit_supply_bound,
            node_empty,
            demand_capped,
            supply_branch,
        },
    }
}

/// Advances the state one step. Writes the new state into `next` and adds
/// per-class arrival rates (veh/s) into `arrivals`.
pub fn step_state(
    net: &Network,
    state: &[f64],
    flows: &FlowField,
    routing_slice: &[f64],
    dep: &[f64],
    next: &mut [f64],
    arrivals: &mut [f64],
) {
    let nn = net.n_nodes();
    let c = net.n_classes();
    let dt = net.dt;

    next.copy_from_slice(state);
    for i in 0..nn * c {
        next[i] += dep[i] * dt;
    }
    arrivals.fill(0.0);

    for i in 0..nn {
        if flows.node_demand[i] <= 0.0 {
            continue;
        }
        for cc in 0..c {
            let w = flows.weights[i * c + cc];
            if w <= 0.0 {
                continue;
            }
            let contrib = flows.node_demand[i] * w;
            for_each_option(net, routing_slice, i, cc, |opt, gamma| {
                if gamma <= 0.0 {
                    return;
                }
                let ratio = match opt {
                    RouteOption::Edge(e) => {
                        if flows.edge_demand[e] > 0.0 {
                            flows.edge_flow[e] / flows.edge_demand[e]
                        } else {
                            0.0
                        }
                    }
                    RouteOption::Exit(x) => {
                        if flows.exit_demand[x] > 0.0 {
                            flows.exit_flow[x] / flows.exit_demand[x]
                        } else {
                            0.0
                        }
                    }
                };
                let f = contrib * gamma * ratio;
                if f <= 0.0 {
                    return;
                }
                next[i * c + cc] -= f * dt;
                match opt {
                    RouteOption::Edge(e) => next[net.edges[e].to * c + cc] += f * dt,
                    RouteOption::Exit(_) => arrivals[cc] += f,
                }
            });
        }
    }
}

/// Runs the full forward simulation under the given controls.
///
/// Fails with a CFL error when an accumulation leaves its admissible range
/// and with a conservation error when mass tracking drifts.
pub fn simulate_forward(net: &Network, ctrl: &ControlTrajectory) -> Result<Trajectory> {
    let nn = net.n_nodes();
    let c = net.n_classes();
    let stride = nn * c;
    let k_max = net.n_steps;
    let dt = net.dt;

    let total_demand: f64 = net.demand_rows.iter().map(|r| r.total).sum();
    let mass_tol = 1e-9 * total_demand.max(1.0);

    let mut traj = Trajectory {
        states: vec![0.0; (k_max + 1) * stride],
        arrivals: vec![0.0; k_max * c],
        edge_flows: vec![0.0; k_max * net.edges.len()],
        exit_flows: vec![0.0; k_max * net.exits.len()],
        flags: Vec::with_capacity(k_max),
        stage_tts: vec![0.0; k_max],
        stage_tac: vec![0.0; k_max],
        cum_departed: 0.0,
        cum_arrived: 0.0,
        state_stride: stride,
    };

    let mut dep = vec![0.0; stride];
    let mut state = vec![0.0; stride];
    let mut next = vec![0.0; stride];
    let mut arrivals = vec![0.0; c];

    for k in 0..k_max {
        let routing_slice = ctrl.routing_slice(net, k);
        departure_field(net, ctrl, k, &mut dep);
        let flows = compute_flows(net, &state, routing_slice, &dep);
        step_state(net, &state, &flows, routing_slice, &dep, &mut next, &mut arrivals);

        // Clamp float dust; anything beyond tolerance is a real violation.
        for i in 0..nn {
            for cc in 0..c {
                let v = &mut next[i * c + cc];
                if *v < 0.0 {
                    if *v < -mass_tol.max(1e-9) {
                        return Err(Error::Cfl {
                            step: k,
                            node: net.region_name(i).to_string(),
                            value: *v,
                        });
                    }
                    *v = 0.0;
                }
            }
            let total: f64 = next[i * c..(i + 1) * c].iter().sum();
            let jam = net.nodes[i].jam();
            if total > jam * (1.0 + 1e-9) {
                return Err(Error::Cfl {
                    step: k,
                    node: net.region_name(i).to_string(),
                    value: total,
                });
            }
        }

        // Stage costs on the pre-step state.
        let mut tts = 0.0;
        for i in 0..nn {
            tts += net.nodes[i].tts_weight * flows.node_total[i];
        }
        traj.stage_tts[k] = tts * dt;
        let t = k as f64 * dt;
        let mut tac = 0.0;
        for cc in 0..c {
            if arrivals[cc] > 0.0 {
                let info = &net.classes[cc];
                tac += info.arrival_weight
                    * arrivals[cc]
                    * net.penalties.arrival_penalty(info.arrival_time, t);
            }
        }
        traj.stage_tac[k] = tac * dt;

        // Bookkeeping.
        traj.states[k * stride..(k + 1) * stride].copy_from_slice(&state);
        traj.arrivals[k * c..(k + 1) * c].copy_from_slice(&arrivals);
        traj.edge_flows[k * net.edges.len()..(k + 1) * net.edges.len()]
            .copy_from_slice(&flows.edge_flow);
        traj.exit_flows[k * net.exits.len()..(k + 1) * net.exits.len()]
            .copy_from_slice(&flows.exit_flow);
        traj.cum_departed += dep.iter().sum::<f64>() * dt;
        traj.cum_arrived += arrivals.iter().sum::<f64>() * dt;
        traj.flags.push(flows.flags);

        std::mem::swap(&mut state, &mut next);

        let mass: f64 = state.iter().sum();
        let imbalance = mass + traj.cum_arrived - traj.cum_departed;
        if imbalance.abs() > mass_tol.max(1e-7) {
            return Err(Error::Conservation { step: k, imbalance });
        }
    }
    traj.states[k_max * stride..].copy_from_slice(&state);
    Ok(traj)
}
