use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// One message per violated invariant, with location where known.
    #[error("scenario validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),

    /// An accumulation left its admissible range during the forward pass.
    #[error("CFL violation at step {step}: accumulation {value:.6} in node {node}")]
    Cfl { step: usize, node: String, value: f64 },

    #[error("vehicle conservation violated at step {step}: imbalance {imbalance:.3e} veh")]
    Conservation { step: usize, imbalance: f64 },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
