//! Adaptive MCMC whose kernel parameter changes only at scheduled
//! adaptation times separated by growing lags, together with the exact and
//! empirical diagnostics used to check its convergence behaviour.
//!
//! The continuous-state code is generic over [`Real`] (`f32`/`f64`); the
//! finite-state drift and minorization checks are generic over [`Exact`],
//! which includes big rationals. Aliases for the common instantiations live
//! at the crate root.

pub mod adapt;
pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod rng;
pub mod runner;
pub mod scalar;
pub mod schedule;
pub mod targets;

pub use error::{Error, Result};
pub use scalar::{Exact, Real};

/// Exact rational scalar for finite-state verification.
pub type Rational = num_rational::BigRational;

pub type Target = targets::TargetDensity<f64>;
pub type Target32 = targets::TargetDensity<f32>;
pub type Param = kernels::KernelParam<f64>;
pub type Spec = runner::RunSpec<f64>;
pub type Output = runner::ChainOutput<f64>;
pub type Output32 = runner::ChainOutput<f32>;
pub type Matrix = kernels::StochasticMatrix<f64>;
pub type ExactMatrix = kernels::StochasticMatrix<Rational>;
pub type Cert = kernels::MinorizationCert<f64>;
pub type ExactCert = kernels::MinorizationCert<Rational>;
pub type Drift = diagnostics::DriftSpec<f64>;
pub type ExactDrift = diagnostics::DriftSpec<Rational>;
