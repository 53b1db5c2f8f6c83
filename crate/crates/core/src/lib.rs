//! Finite-dimensional laboratory for linear-quadratic control with
//! unbounded control operators.
//!
//! The crate builds surrogate models `(A, B, R, T)` whose control operator is
//! graded against the spectrum of `A`, solves the differential and algebraic
//! Riccati equations, and evaluates the integral identities, contraction
//! constructions and uniqueness arguments that the abstract theory rests on
//! as numerical residuals.
//!
//! Modules, bottom-up:
//!
//! * [`numkernel`]: exponentials, fractional powers, Lyapunov solves, quadrature.
//! * [`models`]: surrogate generators and the model file format.
//! * [`semiflow`]: input-to-state map and assumption metrology.
//! * [`dre`]: finite-horizon Riccati solver and its verification.
//! * [`are`]: algebraic Riccati solvers and uniqueness checks.
//! * [`synthesis`]: closed loops, feedback, cost identities, DP oracle.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod are;
pub mod dre;
pub mod error;
pub mod models;
pub mod numkernel;
pub mod rng;
pub mod semiflow;
pub mod synthesis;
pub mod tolerances;

pub use error::{Error, Result};
pub use numkernel::{Matrix, Vector};
