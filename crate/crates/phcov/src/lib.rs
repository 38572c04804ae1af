//! Time-variant port-Hamiltonian systems in a connection-based (covariant)
//! formulation.
//!
//! The state lives on a bundle over the time axis; a [`geometry::Connection`]
//! selects a frame of reference and induces the covariant derivative
//! `∂0 s − Γ0 ∘ s`. Dynamics read `x0 = Γ0 + (J − R) ∂H + G u`, so a
//! time-variant change of coordinates moves structure into the connection
//! instead of destroying it.
//!
//! Modules:
//! - [`geometry`]: charts, connections, tangent/cotangent splitting, covariant
//!   derivative.
//! - [`fields`]: Hamiltonian and structure fields (J, R, G) with derivative and
//!   algebraic checks.
//! - [`systems`]: the covariant port-Hamiltonian system, collocated outputs,
//!   and the power decomposition.
//! - [`transform`]: time-variant state diffeomorphisms, affine input maps,
//!   system pushforward, and the matching PDE (residual checker plus a
//!   linear-quadratic solver).
//! - [`mechanics`]: position/momentum systems with a space connection, the
//!   covertical connection, and the controlled power balance.
//! - [`tracking`]: reference verification and tracking error systems.
//! - [`runner`]: fixed-step integrators, builtin scenarios, scenario files,
//!   and CSV emission.

pub mod error;
pub mod fields;
pub mod geometry;
pub mod mechanics;
pub mod runner;
pub mod systems;
pub mod tracking;
pub mod transform;

mod diff;

pub use error::{Error, Result};

use std::sync::Arc;

/// Dynamic state vector.
pub type StateVec = nalgebra::DVector<f64>;
/// Dynamic matrix.
pub type Mat = nalgebra::DMatrix<f64>;

/// Scalar-valued field on the extended state space `(t, x)`.
pub type ScalarMap = Arc<dyn Fn(f64, &StateVec) -> f64 + Send + Sync>;
/// Vector-valued field on the extended state space.
pub type VectorMap = Arc<dyn Fn(f64, &StateVec) -> StateVec + Send + Sync>;
/// Matrix-valued field on the extended state space.
pub type MatrixMap = Arc<dyn Fn(f64, &StateVec) -> Mat + Send + Sync>;
/// Vector-valued function of time alone.
pub type TimeMap = Arc<dyn Fn(f64) -> StateVec + Send + Sync>;
