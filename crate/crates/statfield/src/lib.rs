//! Collective states of a statistical-field economy of firms and investors.
//!
//! The crate computes per-sector firm and investor densities, the
//! self-consistent average capital per firm, local stability of each
//! sector's equilibrium, oscillation frequencies of the joint
//! capital/expectation dynamics, and runs a small agent-based simulation
//! of the underlying micro-economics for cross-validation.
//!
//! Everything numeric is generic over [`Scalar`] (implemented for `f32` and
//! `f64`). Most users want the `f64` aliases re-exported at the crate root.

pub mod abm;
pub mod dynamics;
pub mod error;
pub mod fieldcore;
pub mod scalar;
pub mod scenario;
pub mod specfun;
pub mod stability;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision scenario.
pub type Scenario = scenario::Scenario<f64>;
/// Double-precision collective state.
pub type FieldSolution = fieldcore::FieldSolution<f64>;
/// Double-precision stability report.
pub type StabilityReport = stability::StabilityReport<f64>;
/// Double-precision dynamics report.
pub type DynamicsReport = dynamics::DynamicsReport<f64>;
/// Double-precision agent population.
pub type AgentPopulation = abm::AgentPopulation<f64>;

/// Single-precision scenario.
pub type Scenario32 = scenario::Scenario<f32>;
/// Single-precision collective state.
pub type FieldSolution32 = fieldcore::FieldSolution<f32>;
