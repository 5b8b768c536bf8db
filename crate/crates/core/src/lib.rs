//! Optimal joint drift-rate and impulse control of a Brownian inventory under
//! long-run average cost.
//!
//! The optimal policy is a control band `(0, q, Q, S)`: jump up to `q` when
//! inventory hits 0, down to `Q` when it hits `S`, and in between run the
//! drift `mu(w(x))` chosen from a compact menu. [`freeboundary::solve`]
//! computes the band and the marginal value `w`, [`verify`] certifies the
//! result and evaluates arbitrary band policies exactly, and [`sim`] runs a
//! Monte Carlo check.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod freeboundary;
pub mod hamiltonian;
pub mod model;
pub mod normal;
pub mod ode;
pub mod policy;
pub mod quad;
pub mod rk;
pub mod roots;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use freeboundary::{solve, FreeBoundarySolution, SolverOptions, Tolerances};
pub use hamiltonian::{CostFn, DriftMenu, HamiltonianValue};
pub use model::{HoldingCost, ImpulseCost, ProblemSpec};
pub use ode::{integrate, Shape, SolutionCurve, StoppingRule};
pub use policy::{BandPolicy, DriftProfile};
pub use sim::{simulate, SimConfig, SimReport};
pub use verify::{check_lower_bound, evaluate_band_policy, CertificationReport, EvalResult};
