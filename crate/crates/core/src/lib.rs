//! Nonlinear Cucker–Smale flocking with Rayleigh-type friction and a discrete
//! p-Laplacian velocity coupling.
//!
//! The crate simulates the norm-type and vector-type systems, evaluates the
//! sufficient conditions for finite-time flocking against simulated and
//! analytic quantities, and ships the reference scenarios.

// Validation uses `!(x > y)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
#[cfg(feature = "cli")]
pub mod cli;
pub mod integrator;
#[cfg(feature = "cli")]
pub mod io;
pub mod model;
pub mod scenarios;
pub mod suite;
pub mod weights;

pub use integrator::{integrate, SimConfig, Trajectory};
pub use model::{AgentEnsemble, ModelParams, Variant};
pub use weights::CommWeight;
