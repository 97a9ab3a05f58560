use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An exhaustive enumeration would exceed the configured limit.
    #[error("{what}: enumeration needs {required} but the cap is {cap}")]
    CapExceeded {
        what: &'static str,
        required: u128,
        cap: u128,
    },

    #[error("invalid pinning: no configuration in the support extends it")]
    InvalidPinning,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (residual {residual:e})")]
    NotSymmetric { residual: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("kernel violates detailed balance (residual {residual:e})")]
    NotReversible { residual: f64 },

    #[error("stationary distribution has zero mass on state {0}")]
    ZeroStationaryMass(usize),

    #[error("kernel is not ergodic")]
    NonErgodic,

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("invalid matroid: {0}")]
    InvalidMatroid(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
