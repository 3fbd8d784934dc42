//! Regional MFD traffic dynamics with discrete adjoint gradients and a
//! projected-gradient dynamic system optimum solver.

pub mod adjoint;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod objective;
pub mod optimizer;
pub mod projection;
pub mod scenario;

pub use error::{Error, Result};
