//! Projected-gradient system-optimum solver plus the MSA and gap-based
//! baseline heuristics, all operating on the same control parameterization.

mod assignment;
mod baselines;
mod skim;

pub use assignment::{free_flow_cost_to_go, free_flow_times, initial_assignment};
pub use baselines::{gap_baseline, msa_baseline};
pub use skim::{best_response, experienced_cost_to_go, travel_times};

use std::time::Instant;

use crate::adjoint::{control_gradient, ControlGradient};
use crate::control::ControlTrajectory;
use crate::dynamics::simulate_forward;
use crate::error::Result;
use crate::objective::{total_cost, CostBreakdown};
use crate::projection::project_controls;
use crate::scenario::{Network, ScenarioConfig};

#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Base step size; None triggers a one-time backtracking probe.
    pub alpha0: Option<f64>,
    /// Stop when best-so-far J improves by less than this relative amount
    /// over `stop_window` consecutive iterations.
    pub stop_rel_change: f64,
    pub stop_window: usize,
    /// Half-width (s) of the initial departure pulse around the on-time
    /// departure instant.
    pub departure_spread: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 50,
            alpha0: None,
            stop_rel_change: 0.005,
            stop_window: 5,
            departure_spread: 0.0,
            seed: 0,
        }
    }
}

/// One row of the convergence log. `total` is the raw iterate cost, not the
/// best-so-far value.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub total: f64,
    pub tts: f64,
    pub tac: f64,
    pub tc: f64,
    pub step_size: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    /// Best-so-far control by total cost.
    pub control: ControlTrajectory,
    pub cost: CostBreakdown,
    pub log: Vec<IterationLog>,
    /// Norm of the projected-gradient fixed-point residual at the returned
    /// control; zero at a stationary point.
    pub stationarity: f64,
}

/// Diminishing step rule alpha0 / (1 + tau): vanishes but sums to infinity.
pub fn step_size(tau: usize, alpha0: f64) -> f64 {
    alpha0 / (1.0 + tau as f64)
}

/// One projected-gradient update: move against the gradient, then restore
/// feasibility exactly.
pub fn projected_gradient_iterate(
    net: &Network,
    ctrl: &ControlTrajectory,
    grad: &ControlGradient,
    alpha: f64,
) -> ControlTrajectory {
    let mut out = ctrl.clone();
    for (x, g) in out.routing.iter_mut().zip(&grad.routing) {
        *x -= alpha * g;
    }
    for (rates, grads) in out.departures.iter_mut().zip(&grad.departures) {
        for (x, g) in rates.iter_mut().zip(grads) {
            *x -= alpha * g;
        }
    }
    project_controls(net, &out)
}

fn control_distance(a: &ControlTrajectory, b: &ControlTrajectory) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.routing.iter().zip(&b.routing) {
        s += (x - y) * (x - y);
    }
    for (ra, rb) in a.departures.iter().zip(&b.departures) {
        for (x, y) in ra.iter().zip(rb) {
            s += (x - y) * (x - y);
        }
    }
    s.sqrt()
}

/// Backtracking probe for the base step: start from a Cauchy-style guess
/// J / |g|^2 and halve until the projected step strictly decreases J.
fn probe_alpha(
    net: &Network,
    ctrl: &ControlTrajectory,
    grad: &ControlGradient,
    j0: f64,
) -> Result<f64> {
    let g2 = grad.norm().powi(2);
    if g2 <= 0.0 {
        return Ok(1.0);
    }
    let mut alpha = j0.max(1e-9) / g2;
    for _ in 0..60 {
        let cand = projected_gradient_iterate(net, ctrl, grad, alpha);
        let traj = simulate_forward(net, &cand)?;
        if total_cost(net, &traj).total < j0 {
            return Ok(alpha);
        }
        alpha *= 0.5;
    }
    Ok(alpha)
}

pub(crate) fn stalled(best_hist: &[f64], window: usize, tol: f64) -> bool {
    if best_hist.len() <= window {
        return false;
    }
    let old = best_hist[best_hist.len() - 1 - window];
    let new = best_hist[best_hist.len() - 1];
    (old - new) / old.abs().max(1e-12) < tol
}

/// Forward-backward-project loop with best-so-far tracking. Stops at
/// `max_iters` or when the best cost stalls per the configured rule.
pub fn optimize(
    net: &Network,
    start: &ControlTrajectory,
    cfg: &OptimizerConfig,
) -> Result<OptimizeResult> {
    let mut ctrl = project_controls(net, start);
    let mut alpha0 = cfg.alpha0;
    let mut best: Option<(CostBreakdown, ControlTrajectory)> = None;
    let mut best_hist = Vec::new();
    let mut log = Vec::new();
    let mut last_alpha = 1e-6;

    for tau in 0..cfg.max_iters {
        let t_iter = Instant::now();
        let traj = simulate_forward(net, &ctrl)?;
        let cost = total_cost(net, &traj);
        let (_, grad) = control_gradient(net, &traj, &ctrl)?;
        let gnorm = grad.norm();

        let a0 = match alpha0 {
            Some(a) => a,
            None => {
                let a = probe_alpha(net, &ctrl, &grad, cost.total)?;
                alpha0 = Some(a);
                a
            }
        };
        let alpha = step_size(tau, a0);
        last_alpha = alpha;

        if best.as_ref().map_or(true, |(c, _)| cost.total < c.total) {
            best = Some((cost.clone(), ctrl.clone()));
        }
        best_hist.push(best.as_ref().unwrap().0.total);
        log.push(IterationLog {
            iteration: tau,
            total: cost.total,
            tts: cost.tts,
            tac: cost.tac,
            tc: cost.tc,
            step_size: alpha,
            grad_norm: gnorm,
            wall_ms: t_iter.elapsed().as_secs_f64() * 1e3,
        });
        if stalled(&best_hist, cfg.stop_window, cfg.stop_rel_change) {
            break;
        }
        ctrl = projected_gradient_iterate(net, &ctrl, &grad, alpha);
    }

    let (cost, control) = best.expect("max_iters >= 1");
    let traj = simulate_forward(net, &control)?;
    let (_, grad) = control_gradient(net, &traj, &control)?;
    let moved = projected_gradient_iterate(net, &control, &grad, last_alpha);
    let stationarity = control_distance(&control, &moved);
    Ok(OptimizeResult { control, cost, log, stationarity })
}

/// Halves the time step and resamples a control by step-doubling: each
/// coarse value is copied to both fine steps, so rates and budgets are
/// preserved exactly.
pub fn refine_timestep(
    net: &Network,
    cfg: &ScenarioConfig,
    ctrl: &ControlTrajectory,
) -> (ScenarioConfig, ControlTrajectory) {
    let mut fine_cfg = cfg.clone();
    fine_cfg.dt = cfg.dt / 2.0;

    let stride = net.routing_stride;
    let mut routing = vec![0.0; 2 * net.n_steps * stride];
    for k in 0..net.n_steps {
        let src = &ctrl.routing[k * stride..(k + 1) * stride];
        routing[2 * k * stride..(2 * k + 1) * stride].copy_from_slice(src);
        routing[(2 * k + 1) * stride..(2 * k + 2) * stride].copy_from_slice(src);
    }
    let departures = ctrl
        .departures
        .iter()
        .map(|rates| rates.iter().flat_map(|&r| [r, r]).collect())
        .collect();
    (fine_cfg, ControlTrajectory { routing, departures })
}
