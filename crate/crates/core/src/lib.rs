//! Numerical laboratory for the stochastic heat equation
//! `du = u_xx dt + sigma(u) W(dt dx)` on the torus `[-1, 1)`.
//!
//! * [`fields`]: grid, discrete fields and the norms observables are built on.
//! * [`kernel`]: periodic heat kernel, its semigroup and smoothing checks.
//! * [`noise`]: counter-based space-time white noise with time shifts.
//! * [`solver`]: renormalized time stepping and pathwise comparisons.
//! * [`lyapunov`]: Lyapunov exponent estimators and the closed-form integral.
//! * [`harness`]: configuration, experiments, ensembles, output and CLI.

pub mod error;
pub mod fields;
pub mod harness;
pub mod kernel;
pub mod lyapunov;
pub mod noise;
pub mod solver;

pub use error::{Error, Result};
