//! Control trajectory: per-step routing coefficients for every free
//! (node, class) block plus per-triple departure rate profiles.

use crate::error::{Error, Result};
use crate::scenario::{Network, Routing};

/// Decision variables of the assignment problem. `routing` is step-major:
/// the coefficients of step `k` occupy
/// `routing[k * stride .. (k+1) * stride]`, with each free block at its
/// `offset` within the slice. `departures[r]` holds the inflow rates of
/// demand row `r` over the departure horizon (veh/s).
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTrajectory {
    pub routing: Vec<f64>,
    pub departures: Vec<Vec<f64>>,
}

impl ControlTrajectory {
    /// Uniform routing splits and the scenario-declared departure profiles.
    pub fn uniform(net: &Network) -> Self {
        let mut routing = vec![0.0; net.n_steps * net.routing_stride];
        for k in 0..net.n_steps {
            let slice = &mut routing[k * net.routing_stride..(k + 1) * net.routing_stride];
            for block in &net.blocks {
                let share = 1.0 / block.options.len() as f64;
                for s in 0..block.options.len() {
                    slice[block.offset + s] = share;
                }
            }
        }
        let departures = net.demand_rows.iter().map(|r| r.base_rates.clone()).collect();
        ControlTrajectory { routing, departures }
    }

    pub fn routing_slice(&self, net: &Network, k: usize) -> &[f64] {
        &self.routing[k * net.routing_stride..(k + 1) * net.routing_stride]
    }

    pub fn routing_slice_mut(&mut self, net: &Network, k: usize) -> &mut [f64] {
        &mut self.routing[k * net.routing_stride..(k + 1) * net.routing_stride]
    }

    /// Departure rate of demand row `r` at step `k`; zero past the horizon.
    pub fn departure_rate(&self, r: usize, k: usize) -> f64 {
        self.departures[r].get(k).copied().unwrap_or(0.0)
    }

    /// Routing coefficient for (node, class) towards a given option slot.
    pub fn gamma(&self, net: &Network, k: usize, block: usize, slot: usize) -> f64 {
        self.routing[k * net.routing_stride + net.blocks[block].offset + slot]
    }

    /// Verifies simplex feasibility of every block and the budget of every
    /// departure profile.
    pub fn check_feasible(&self, net: &Network, tol: f64) -> Result<()> {
        if self.routing.len() != net.n_steps * net.routing_stride {
            return Err(Error::Invalid(format!(
                "routing vector has {} entries, expected {}",
                self.routing.len(),
                net.n_steps * net.routing_stride
            )));
        }
        for k in 0..net.n_steps {
            let slice = self.routing_slice(net, k);
            for block in &net.blocks {
                let coeffs = &slice[block.offset..block.offset + block.options.len()];
                if coeffs.iter().any(|&g| g < -tol) {
                    return Err(Error::Invalid(format!(
                        "negative routing coefficient at step {k}, node {}",
                        net.region_name(block.node)
                    )));
                }
                let sum: f64 = coeffs.iter().sum();
                if (sum - 1.0).abs() > tol {
                    return Err(Error::Invalid(format!(
                        "routing block at step {k}, node {} sums to {sum}",
                        net.region_name(block.node)
                    )));
                }
            }
        }
        if self.departures.len() != net.demand_rows.len() {
            return Err(Error::Invalid("departure row count mismatch".into()));
        }
        for (r, rates) in self.departures.iter().enumerate() {
            let row = &net.demand_rows[r];
            if rates.len() != net.horizon_steps {
                return Err(Error::Invalid(format!(
                    "departure profile {r} has {} steps, expected {}",
                    rates.len(),
                    net.horizon_steps
                )));
            }
            if rates.iter().any(|&d| d < -tol) {
                return Err(Error::Invalid(format!("negative departure rate in row {r}")));
            }
            let mass: f64 = rates.iter().sum::<f64>() * net.dt;
            if (mass - row.total).abs() > tol * row.total.max(1.0) {
                return Err(Error::Invalid(format!(
                    "departure budget of row {r} is {mass}, expected {}",
                    row.total
                )));
            }
        }
        Ok(())
    }

    /// Resolves the routing coefficient of a (node, class) option at step k,
    /// honouring forced routes.
    pub fn gamma_of(&self, net: &Network, k: usize, node: usize, class: usize, slot: usize) -> f64 {
        match net.routing_at(node, class) {
            Routing::Absent => 0.0,
            Routing::Forced(_) => 1.0,
            Routing::Free { block } => self.gamma(net, k, block, slot),
        }
    }
}
