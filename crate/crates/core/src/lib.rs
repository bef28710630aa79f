//! Pseudospectral simulator and numerical verification lab for the stochastic
//! convective Brinkman–Forchheimer equations on the periodic torus, driven by
//! multiplicative compensated-Poisson jump noise.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectral`]: torus domain, divergence-free Fourier fields, Leray
//!   projection, Stokes operator, norms and projection operators.
//! - [`operators`]: the convective term `B`, the absorption term `C`, the full
//!   operator `G = μA + B + βC`, the monotonicity shift `η` and the inequality
//!   checkers built on them.
//! - [`noise`]: finite-activity Poisson random measures, noise coefficient
//!   families and their growth/Lipschitz/stabilization constants.
//! - [`integrator`]: jump-adapted exponential-Euler time stepping and the
//!   per-path energy ledger.
//! - [`stationary`]: the stationary problem and its uniqueness regime.
//! - [`stability`] and [`ergodicity`]: Monte Carlo decay, stabilization,
//!   coupling and invariant-measure experiments.
//! - [`config`] and [`orchestrator`]: JSON configuration, experiment dispatch
//!   and artifact writing used by the `scbf` binary.

pub mod config;
pub mod ergodicity;
pub mod error;
pub mod integrator;
pub mod noise;
pub mod operators;
pub mod orchestrator;
pub mod spectral;
pub mod stability;
pub mod stationary;
pub mod stats;

pub use error::{Error, Result};
pub use integrator::{EnergyLedger, SimulationConfig, Trajectory};
pub use noise::{Coefficient, JumpEvent, JumpModel, MarkDistribution, MarkFn};
pub use operators::CbfParameters;
pub use spectral::{make_domain, Domain, FieldNorms, Norm, SpectralField, TorusDomain};
