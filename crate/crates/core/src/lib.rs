//! Exact perturbational solutions of the one-dimensional compressible Euler
//! equations with a linear velocity profile `u = (a'/a) x + b`.
//!
//! * [`ode`] integrates the reduced system for `a`, `b` and the central value
//!   `y = rho^(gamma-1)(0, t)` and detects collapse of `a`.
//! * [`field`] evaluates density, velocity and the vacuum support.
//! * [`classifier`] decides finite-time blowup versus global existence.
//! * [`verifier`] checks the fields against the PDE with finite differences.

// `!(x > 0.0)` rejects NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod field;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod verifier;

pub use classifier::{classify, energy, Classification, Criterion, Verdict};
pub use field::{FieldSample, Quadratic, SupportKind, SupportSet};
pub use model::{ModelParams, ParamError, SeedData, YEquation};
pub use ode::{integrate, integrate_with, IntegratorOptions, OdeError, Trajectory, TrajectoryState, TrajectoryStatus};
pub use verifier::{GridSpec, ResidualReport};
