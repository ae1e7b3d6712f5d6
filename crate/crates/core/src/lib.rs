//! Two-gender Smoluchowski coagulation.
//!
//! Particles carry male and female arms; a male arm of one particle bonds with a
//! female arm of another at a rate proportional to the number of such pairings.
//! The crate provides
//!
//! - [`model`]: particle-type algebra and concentration states,
//! - [`measures`] and [`series`]: integer measures and truncated power series,
//! - [`ode`]: a truncated deterministic solver with exact overflow bookkeeping,
//! - [`characteristics`]: generating-function evaluation and the critical time,
//! - [`asymptotics`]: limiting concentrations and two-type Galton-Watson progeny,
//! - [`explicit`]: closed-form solutions for monodisperse families,
//! - [`mlsim`]: a Marcus-Lushnikov stochastic particle simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod characteristics;
pub mod explicit;
pub mod format;
pub mod measures;
pub mod mlsim;
pub mod model;
pub mod ode;
pub mod rng;
pub mod scalar;
pub mod series;

pub use model::{ConcentrationState, ParticleType, TypeWeights};
pub use scalar::Scalar;
