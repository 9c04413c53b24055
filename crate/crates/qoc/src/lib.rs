//! Solver and verification toolkit for the family of monotonically convergent
//! iteration schemes of bilinear quantum optimal control.
//!
//! The crate is organized around five pieces:
//!
//! - [`quantum`]: validated domain types (operators, states, grids, sampled
//!   control fields, scheme parameters) and the shared dense linear algebra;
//! - [`propagator`]: norm-preserving Crank-Nicolson stepping of the state and
//!   adjoint equations, with and without the coupled implicit field update;
//! - [`scheme`]: the (delta, eta) iteration loop, cost evaluation, gain
//!   bookkeeping and stopping logic;
//! - [`analysis`]: computable certificates — uniform field bounds, the
//!   large-penalty convergence threshold, Gronwall sensitivity checks,
//!   critical-point residuals and limit-set diagnostics;
//! - [`problems`]: built-in deterministic test instances (two-level system,
//!   n-level ladder, 1D particle in a box).

pub mod analysis;
pub mod error;
pub mod problems;
pub mod propagator;
pub mod quantum;
pub mod scheme;

pub use error::{QocError, Result};
