//! Central finite-difference oracle for gradient validation.
//!
//! Perturbs a single control component by +-h without reprojecting,
//! simulates both variants and reports (J+ - J-) / 2h. If any min-regime
//! or emptiness flag differs between the two runs the point is nonsmooth
//! and the estimate is rejected.

use crate::control::ControlTrajectory;
use crate::dynamics::simulate_forward;
use crate::error::Error;
use crate::objective::total_cost;
use crate::scenario::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlComponent {
    /// Routing coefficient: step, free block index, option slot.
    Routing { k: usize, block: usize, slot: usize },
    /// Departure rate: demand row, step.
    Departure { row: usize, k: usize },
}

#[derive(Debug)]
pub enum FdError {
    /// A regime flag flipped between the two probe runs.
    Nonsmooth,
    Sim(Error),
}

fn perturbed(
    net: &Network,
    ctrl: &ControlTrajectory,
    comp: ControlComponent,
    delta: f64,
) -> ControlTrajectory {
    let mut out = ctrl.clone();
    match comp {
        ControlComponent::Routing { k, block, slot } => {
            let b = &net.blocks[block];
            out.routing_slice_mut(net, k)[b.offset + slot] += delta;
        }
        ControlComponent::Departure { row, k } => out.departures[row][k] += delta,
    }
    out
}

/// Central-difference estimate of dJ/d(component) at `ctrl`.
pub fn fd_gradient(
    net: &Network,
    ctrl: &ControlTrajectory,
    comp: ControlComponent,
    h: f64,
) -> Result<f64, FdError> {
    let plus = simulate_forward(net, &perturbed(net, ctrl, comp, h)).map_err(FdError::Sim)?;
    let minus = simulate_forward(net, &perturbed(net, ctrl, comp, -h)).map_err(FdError::Sim)?;
    if plus.flags != minus.flags {
        return Err(FdError::Nonsmooth);
    }
    let jp = total_cost(net, &plus).total;
    let jm = total_cost(net, &minus).total;
    Ok((jp - jm) / (2.0 * h))
}
