//! Parametrization-KAM tools for the forced relay oscillator `ẍ + sign(x) = ε p(t)`.
//!
//! - [`fourier`]: truncated Fourier series and the cohomological equation.
//! - [`dynamics`]: closed-form flows, impact times, impact maps and Jacobians.
//! - [`maps`]: the annulus-map interface shared by the solvers.
//! - [`kam`]: invariant circles by the parametrization method.
//! - [`rotation`]: Diophantine margins, rotation numbers, frequency ladders.
//! - [`certify`]: structural audits and the confinement experiment.

// `!(x > a)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod fourier;
pub mod kam;
pub mod maps;
pub mod rotation;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
