use thiserror::Error;

use crate::verify::CertificationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The problem instance (menu, costs, holding function) is not admissible.
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration at `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    /// Adaptive step size fell below the floor.
    #[error("step size collapsed to {step:e} at x = {x} (w = {w}); the problem is too stiff for the requested tolerance")]
    Stiffness { x: f64, w: f64, step: f64 },

    #[error("stopping rule not met before the x cap {x_cap} (last w = {w})")]
    CapExceeded { x_cap: f64, w: f64 },

    #[error("cannot classify curve: {0}")]
    Classification(String),

    #[error("failed to bracket {what}: {detail}")]
    Bracketing { what: &'static str, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The outer search over the initial value failed; `trace` holds the
    /// `(w0, gamma2* - gamma1*)` pairs visited (`None` when the inner solve failed).
    #[error("free boundary solve failed: {message}")]
    SolveFailure {
        message: String,
        trace: Vec<(f64, Option<f64>)>,
    },

    #[error("degenerate policy: boundary system is singular (condition number {condition:e})")]
    DegeneratePolicy { condition: f64 },

    #[error("lower-bound certification failed: {}", .0.summary())]
    Certification(Box<CertificationReport>),

    #[error("discretization too coarse: {0}")]
    Discretization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
