//! Discrete adjoint of the forward dynamics: exact gradients of the
//! criterion with respect to routing splits and departure rates.
//!
//! The adjoint state lambda[i, c] is the sensitivity of the remaining cost
//! to the class accumulation n[i, c]; it carries both the aggregate and the
//! class-specific sensitivity in one number. The backward recursion is
//!   lambda_K = d(terminal)/dn,
//!   lambda_k = dg_k/dn_k + lambda_{k+1} * dE_k/dn_k,
//! applied as a hand-coded vector-Jacobian product of one forward step with
//! the min-regime selection of the forward pass held fixed. At kinks this
//! yields one valid element of the generalized gradient; the finite
//! difference oracle detects and excludes regime flips.
//!
//! Only the min-based flow model with buffered origins is differentiated;
//! the merge-based model and the queue origin model are forward-only.

mod oracle;

pub use oracle::{fd_gradient, ControlComponent, FdError};

use crate::control::ControlTrajectory;
use crate::dynamics::{compute_flows, FlowField, Trajectory};
use crate::error::{Error, Result};
use crate::scenario::{FlowModel, Network, OriginModel, RouteOption, Routing};

/// Adjoint states for k = 0..=K, same (node, class) layout as the state.
#[derive(Clone, Debug)]
pub struct AdjointTrajectory {
    pub lambda: Vec<f64>,
    stride: usize,
}

impl AdjointTrajectory {
    pub fn lambda_at(&self, k: usize) -> &[f64] {
        &self.lambda[k * self.stride..(k + 1) * self.stride]
    }
}

/// Gradient of J with the same layout as `ControlTrajectory`.
#[derive(Clone, Debug)]
pub struct ControlGradient {
    pub routing: Vec<f64>,
    pub departures: Vec<Vec<f64>>,
}

impl ControlGradient {
    pub fn norm(&self) -> f64 {
        let mut s: f64 = self.routing.iter().map(|g| g * g).sum();
        for row in &self.departures {
            s += row.iter().map(|g| g * g).sum::<f64>();
        }
        s.sqrt()
    }
}

fn require_differentiable(net: &Network) -> Result<()> {
    if net.flow_model != FlowModel::Strada {
        return Err(Error::Invalid(
            "gradients are only available for the min-based flow model".into(),
        ));
    }
    if net.origin_model != OriginModel::Buffer {
        return Err(Error::Invalid(
            "gradients are only available for buffered origins".into(),
        ));
    }
    Ok(())
}

/// lambda_K: derivative of the terminal cost, mu_i * N_i(K) for every class.
pub fn terminal_adjoint(net: &Network, state: &[f64]) -> Vec<f64> {
    let c = net.n_classes();
    let mut lambda = vec![0.0; net.n_nodes() * c];
    for (i, node) in net.nodes.iter().enumerate() {
        if node.terminal_weight > 0.0 {
            let n: f64 = state[i * c..(i + 1) * c].iter().sum();
            let v = node.terminal_weight * n;
            lambda[i * c..(i + 1) * c].fill(v);
        }
    }
    lambda
}

/// Output of one backward step.
struct StepBackward {
    /// lambda_k (or a partial sum, depending on the included terms).
    lambda: Vec<f64>,
    /// dJ/d(routing coefficients of step k), one slot per block option.
    routing_grad: Vec<f64>,
}

/// Applies the transposed linearisation of one forward step.
///
/// `include_identity` adds lambda_next itself (the E_k identity part);
/// `include_stage` adds the stage-cost terms of step k. With both enabled
/// this computes the full recursion lambda_k = dg_k + lambda_{k+1} dE_k.
fn backward_step(
    net: &Network,
    state: &[f64],
    routing_slice: &[f64],
    lambda_next: &[f64],
    k: usize,
    include_identity: bool,
    include_stage: bool,
) -> StepBackward {
    let nn = net.n_nodes();
    let c = net.n_classes();
    let dt = net.dt;

    let dep = vec![0.0; nn * c];
    let flows: FlowField = compute_flows(net, state, routing_slice, &dep);

    let mut lambda = vec![0.0; nn * c];
    if include_identity {
        lambda.copy_from_slice(lambda_next);
    }
    if include_stage {
        for i in 0..nn {
            let w = net.nodes[i].tts_weight * dt;
            for cc in 0..c {
                lambda[i * c + cc] += w;
            }
        }
    }

    // Cost coefficient of one unit of flow rate (veh/s) on each option.
    let coef_edge = |e: usize, i: usize, cc: usize| -> f64 {
        dt * (lambda_next[net.edges[e].to * c + cc] - lambda_next[i * c + cc])
    };
    let t = k as f64 * dt;
    let coef_exit = |i: usize, cc: usize| -> f64 {
        let pen = if include_stage {
            let info = &net.classes[cc];
            info.arrival_weight * net.penalties.arrival_penalty(info.arrival_time, t)
        } else {
            0.0
        };
        dt * (pen - lambda_next[i * c + cc])
    };

    // Pass 1: coefficient-weighted partial demands per edge and exit.
    let mut edge_p = vec![0.0; net.edges.len()];
    let mut exit_p = vec![0.0; net.exits.len()];
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
            each_option(net, routing_slice, i, cc, |opt, gamma| {
                let phi = contrib * gamma;
                match opt {
                    RouteOption::Edge(e) => edge_p[e] += coef_edge(e, i, cc) * phi,
                    RouteOption::Exit(x) => exit_p[x] += coef_exit(i, cc) * phi,
                }
            });
        }
    }

    // Sensitivity of the flow bundle on each target to its partial demand.
    // Demand-bound targets pass derivatives through unchanged; supply-bound
    // targets rescale (flow fixed, composition shifts).
    let flags = &flows.flags;
    let target_g = |opt: RouteOption, coef: f64| -> f64 {
        match opt {
            RouteOption::Edge(e) => {
                if flags.edge_supply_bound[e] {
                    if flows.edge_demand[e] > 0.0 {
                        flows.edge_flow[e] / flows.edge_demand[e]
                            * (coef - edge_p[e] / flows.edge_demand[e])
                    } else {
                        0.0
                    }
                } else {
                    coef
                }
            }
            RouteOption::Exit(x) => {
                if flags.exit_supply_bound[x] {
                    if flows.exit_demand[x] > 0.0 {
                        flows.exit_flow[x] / flows.exit_demand[x]
                            * (coef - exit_p[x] / flows.exit_demand[x])
                    } else {
                        0.0
                    }
                } else {
                    coef
                }
            }
        }
    };

    // Pass 2: per-flow sensitivities G, folded into the state adjoint and
    // the routing gradient. For node i with composition weights w_c,
    //   d(phi_f)/d(n[i,c']) = gamma_f [ D' w_c + (D/N)(1{c'=c} - w_c) ],
    // so the per-node fold needs U = sum_f G gamma w and V[c'] =
    // sum_{f of class c'} G gamma.
    // Classes absent at a node (w = 0) still have nonzero derivatives: an
    // added vehicle of class c would leave at the per-vehicle rate D/N. An
    // empty node is handled by the limit D/N -> D'(0), the exact one-sided
    // derivative of its outflows.
    let mut routing_grad = vec![0.0; net.routing_stride];
    let mut v = vec![0.0; c];
    for i in 0..nn {
        let mut u = 0.0;
        v.fill(0.0);
        let mut any = false;
        for cc in 0..c {
            let w = flows.weights[i * c + cc];
            each_option_with_slot(net, routing_slice, i, cc, |opt, gamma, slot| {
                any = true;
                let coef = match opt {
                    RouteOption::Edge(e) => coef_edge(e, i, cc),
                    RouteOption::Exit(_) => coef_exit(i, cc),
                };
                let g = target_g(opt, coef);
                if let Some(grad_idx) = slot {
                    routing_grad[grad_idx] += g * flows.node_demand[i] * w;
                }
                u += g * gamma * w;
                v[cc] += g * gamma;
            });
        }
        if !any {
            continue;
        }
        let (dprime, rate) = if flows.node_total[i] > 0.0 {
            (
                net.nodes[i].demand_slope(flows.node_total[i]),
                flows.node_demand[i] / flows.node_total[i],
            )
        } else {
            let slope0 = net.nodes[i].demand_slope(0.0);
            (slope0, slope0)
        };
        for cc in 0..c {
            lambda[i * c + cc] += dprime * u + rate * (v[cc] - u);
        }
    }

    // Pass 3: supply side. A supply-bound edge's flow follows the receiving
    // region's supply curve.
    for j in 0..net.n_regions {
        let sprime = net.nodes[j].supply_slope(flows.node_total[j]);
        if sprime == 0.0 {
            continue;
        }
        let mut total = 0.0;
        for &e in &net.nodes[j].in_edges {
            if flags.edge_supply_bound[e] && flows.edge_demand[e] > 0.0 {
                total += edge_p[e] / flows.edge_demand[e] * net.edges[e].beta;
            }
        }
        if total != 0.0 {
            let add = total * sprime;
            for cc in 0..c {
                lambda[j * c + cc] += add;
            }
        }
    }

    StepBackward { lambda, routing_grad }
}

/// Iterates all options of (node, class) including zero-coefficient ones;
/// zero splits still carry a gradient.
fn each_option<F: FnMut(RouteOption, f64)>(
    net: &Network,
    routing_slice: &[f64],
    node: usize,
    class: usize,
    mut f: F,
) {
    each_option_with_slot(net, routing_slice, node, class, |opt, gamma, _| f(opt, gamma));
}

/// Like `each_option`, also yielding the control-vector index of free
/// coefficients.
fn each_option_with_slot<F: FnMut(RouteOption, f64, Option<usize>)>(
    net: &Network,
    routing_slice: &[f64],
    node: usize,
    class: usize,
    mut f: F,
) {
    match net.routing_at(node, class) {
        Routing::Absent => {}
        Routing::Forced(opt) => f(opt, 1.0, None),
        Routing::Free { block } => {
            let b = &net.blocks[block];
            for (s, &opt) in b.options.iter().enumerate() {
                f(opt, routing_slice[b.offset + s], Some(b.offset + s));
            }
        }
    }
}

/// Gradient of the stage cost g_k with respect to the step's state.
pub fn stage_cost_gradient(
    net: &Network,
    state: &[f64],
    routing_slice: &[f64],
    k: usize,
) -> Vec<f64> {
    let zero = vec![0.0; net.n_nodes() * net.n_classes()];
    backward_step(net, state, routing_slice, &zero, k, false, true).lambda
}

/// Applies lambda * dE_k/dn_k (dynamics only, stage cost excluded).
pub fn state_jacobian_transpose(
    net: &Network,
    state: &[f64],
    routing_slice: &[f64],
    lambda: &[f64],
    k: usize,
) -> Vec<f64> {
    backward_step(net, state, routing_slice, lambda, k, true, false).lambda
}

/// Applies lambda * dE_k/d(routing_k); the departure part is lambda-lookup
/// (dE/dDelta = dt) and lives in `control_gradient`.
pub fn control_jacobian_transpose(
    net: &Network,
    state: &[f64],
    routing_slice: &[f64],
    lambda: &[f64],
    k: usize,
) -> Vec<f64> {
    backward_step(net, state, routing_slice, lambda, k, true, false).routing_grad
}

/// Runs the backward recursion over a complete forward trajectory.
pub fn backward_sweep(
    net: &Network,
    traj: &Trajectory,
    ctrl: &ControlTrajectory,
) -> Result<AdjointTrajectory> {
    Ok(sweep(net, traj, ctrl)?.0)
}

/// Backward sweep plus gradient assembly in a single pass.
pub fn control_gradient(
    net: &Network,
    traj: &Trajectory,
    ctrl: &ControlTrajectory,
) -> Result<(AdjointTrajectory, ControlGradient)> {
    sweep(net, traj, ctrl)
}

fn sweep(
    net: &Network,
    traj: &Trajectory,
    ctrl: &ControlTrajectory,
) -> Result<(AdjointTrajectory, ControlGradient)> {
    require_differentiable(net)?;
    let stride = net.n_nodes() * net.n_classes();
    let k_max = net.n_steps;
    let c = net.n_classes();

    let mut adj = AdjointTrajectory { lambda: vec![0.0; (k_max + 1) * stride], stride };
    let mut grad = ControlGradient {
        routing: vec![0.0; k_max * net.routing_stride],
        departures: net
            .demand_rows
            .iter()
            .map(|_| vec![0.0; net.horizon_steps])
            .collect(),
    };

    let terminal = terminal_adjoint(net, traj.state_at(k_max));
    adj.lambda[k_max * stride..].copy_from_slice(&terminal);

    for k in (0..k_max).rev() {
        let lambda_next: Vec<f64> = adj.lambda_at(k + 1).to_vec();
        let routing_slice = ctrl.routing_slice(net, k);
        let step =
            backward_step(net, traj.state_at(k), routing_slice, &lambda_next, k, true, true);
        adj.lambda[k * stride..(k + 1) * stride].copy_from_slice(&step.lambda);
        grad.routing[k * net.routing_stride..(k + 1) * net.routing_stride]
            .copy_from_slice(&step.routing_grad);

        if k < net.horizon_steps {
            for (r, row) in net.demand_rows.iter().enumerate() {
                grad.departures[r][k] =
                    net.dt * lambda_next[row.origin_node * c + row.class];
            }
        }
    }
    Ok((adj, grad))
}
