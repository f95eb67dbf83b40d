//! Stabilized linearly constrained Lagrangian solver for smooth nonlinear
//! programs `l <= (x; c(x); Ax) <= u`.

pub mod driver;
pub mod innersolve;
pub mod linearize;
pub mod merit;
pub mod model;

pub use driver::{solve, solve_with, Mode, OuterOptions, SolveReport, SolveStatus};
pub use model::{catalog_get, catalog_names, NlpProblem};
