//! Asynchronous distributed dual ascent for constraint-coupled strongly convex
//! programs.
//!
//! The crate is organized bottom-up:
//!
//! - [`problem`]: the coupled program, the local argmin oracle, the dual
//!   function and the regularity checks;
//! - [`constants`]: the per-agent constants and step-size bounds;
//! - [`agents`]: the asynchronous and synchronous per-agent updates;
//! - [`sim`]: the deterministic discrete-event engine (clocks, delays,
//!   mailboxes, the global event counter and the realized asynchrony bound);
//! - [`oracle`]: independent reference solvers and numeric checkers;
//! - [`harness`]: instance generators, instance files, run records and
//!   experiment sweeps.

pub mod agents;
pub mod constants;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod sim;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
pub use problem::{
    coupling_lipschitz, dual_value, dual_value_and_gradient, eval_coupling, local_argmin,
    primal_response, project_omega, validate_problem, BoxBounds, CheckStatus, CouplingBlock,
    DualPoint, Graph, Hessian, LocalCost, Problem, ValidationReport,
};
