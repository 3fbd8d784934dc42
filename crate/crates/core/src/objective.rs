//! Total-cost criterion: time spent in the network, schedule-delay cost of
//! arrivals and a quadratic terminal-occupancy penalty.

use crate::dynamics::Trajectory;
use crate::scenario::Network;

/// Criterion value with its components. `stage[k]` is the contribution of
/// step k; the terminal penalty is kept separate in `tc`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostBreakdown {
    pub tts: f64,
    pub tac: f64,
    pub tc: f64,
    pub total: f64,
    pub stage: Vec<f64>,
}

/// Schedule-delay cost per vehicle arriving at time `t` with target `t_a`.
pub fn arrival_penalty(net: &Network, t_a: f64, t: f64) -> f64 {
    net.penalties.arrival_penalty(t_a, t)
}

/// Stage cost of step k: weighted accumulation held over the step plus the
/// penalised arrival flows, both scaled by dt. `state` is the step's
/// starting state, `arrivals` the per-class exit rates (veh/s).
pub fn stage_cost(net: &Network, state: &[f64], arrivals: &[f64], k: usize) -> f64 {
    let c = net.n_classes();
    let mut tts = 0.0;
    for (i, node) in net.nodes.iter().enumerate() {
        let n: f64 = state[i * c..(i + 1) * c].iter().sum();
        tts += node.tts_weight * n;
    }
    let t = k as f64 * net.dt;
    let mut tac = 0.0;
    for (cc, info) in net.classes.iter().enumerate() {
        if arrivals[cc] > 0.0 {
            tac += info.arrival_weight
                * arrivals[cc]
                * net.penalties.arrival_penalty(info.arrival_time, t);
        }
    }
    (tts + tac) * net.dt
}

/// Terminal cost 0.5 * sum_i mu_i * N_i(K)^2.
pub fn terminal_cost(net: &Network, state: &[f64]) -> f64 {
    let c = net.n_classes();
    let mut tc = 0.0;
    for (i, node) in net.nodes.iter().enumerate() {
        if node.terminal_weight > 0.0 {
            let n: f64 = state[i * c..(i + 1) * c].iter().sum();
            tc += 0.5 * node.terminal_weight * n * n;
        }
    }
    tc
}

/// Evaluates the criterion over a completed trajectory.
pub fn total_cost(net: &Network, traj: &Trajectory) -> CostBreakdown {
    let tts: f64 = traj.stage_tts.iter().sum();
    let tac: f64 = traj.stage_tac.iter().sum();
    let tc = terminal_cost(net, traj.state_at(net.n_steps));
    let stage: Vec<f64> =
        traj.stage_tts.iter().zip(&traj.stage_tac).map(|(a, b)| a + b).collect();
    CostBreakdown { tts, tac, tc, total: tts + tac + tc, stage }
}
