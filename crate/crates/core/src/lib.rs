//! Numerical laboratory for the stochastic heat equation driven by Gaussian noise that is
//! fractional in time and colored (Riesz-type) in space.
//!
//! The crate is organised bottom-up: special functions and quadrature, the noise and Lévy
//! generator models, the existence criterion, the exact covariance of the solution, Gaussian
//! samplers, local-nondeterminism audits and path-regularity estimators.

pub mod covariance;
pub mod error;
pub mod existence;
pub mod levy;
pub mod noise_model;
pub mod quadrature;
pub mod regularity;
pub mod sampler;
pub mod slnd;
pub mod special;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use levy::{LevyExponent, LevyKind, LowerIndex};
pub use noise_model::{derive_exponents, Exponents, NoiseSpec};
pub use quadrature::{IntegralResult, QuadratureBudget};
