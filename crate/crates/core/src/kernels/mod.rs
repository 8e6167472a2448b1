//! pi-invariant transition kernels.
//!
//! Continuous kernels mutate a [`ChainState`] in place and report a
//! [`StepOutcome`]; finite-state kernels work on state indices.

mod am;
pub mod finite;
pub mod matrix;
mod rwm;
pub mod split;

pub use am::{am_mixture_step, AmProposal, AM_LOCAL_SCALE, AM_MIXTURE_WEIGHT, AM_SCALE};
pub use finite::{finite_mh_step, finite_transition_matrix, FiniteMh, FiniteStep};
pub use matrix::{sample_discrete, total_variation, StochasticMatrix};
pub use rwm::{metropolis_acceptance, rwm_step};
pub use split::{compute_minorization, split_chain_step, MinorizationCert, SplitChain};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::targets::TargetDensity;

/// The adapted parameter of a kernel family.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelParam<F: Real> {
    /// Random-walk proposal variance.
    Scalar { gamma: F },
    /// Empirical covariance feeding the AM mixture; `None` during warm-up.
    Covariance { sigma: Option<DMatrix<F>>, n_seen: u64 },
    /// Proposal width of the finite-state kernel, 1 or 2.
    FiniteIdx { gamma: u8 },
    /// Random-walk variance tuned toward a 0.234 acceptance rate.
    AccTarget { nu: F },
    /// Direct independent draws; nothing to adapt.
    Direct,
}

impl<F: Real> KernelParam<F> {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelParam::Scalar { gamma } | KernelParam::AccTarget { nu: gamma } => {
                if !(*gamma > F::zero()) || !gamma.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "variance must be positive, got {}",
                        gamma.as_f64()
                    )));
                }
            }
            KernelParam::Covariance { sigma: Some(s), .. } => {
                if s.nrows() != s.ncols() {
                    return Err(Error::InvalidParameter("covariance must be square".into()));
                }
                let tol = F::of(1e-10);
                let asym = (s - s.transpose()).abs().max();
                if asym > tol {
                    return Err(Error::InvalidParameter("covariance is not symmetric".into()));
                }
            }
            KernelParam::FiniteIdx { gamma } if !matches!(gamma, 1 | 2) => {
                return Err(Error::InvalidParameter(format!("finite gamma {gamma}")));
            }
            _ => {}
        }
        Ok(())
    }

    /// False when any stored number is infinite or NaN.
    pub fn is_finite(&self) -> bool {
        match self {
            KernelParam::Scalar { gamma } | KernelParam::AccTarget { nu: gamma } => {
                gamma.as_f64().is_finite()
            }
            KernelParam::Covariance { sigma, .. } => sigma
                .as_ref()
                .is_none_or(|s| s.iter().all(|v| v.as_f64().is_finite())),
            KernelParam::FiniteIdx { .. } | KernelParam::Direct => true,
        }
    }

    /// Scalar summary used in traces: the variance, the trace of the
    /// covariance, or the finite index.
    pub fn summary(&self) -> f64 {
        match self {
            KernelParam::Scalar { gamma } => gamma.as_f64(),
            KernelParam::AccTarget { nu } => nu.as_f64(),
            KernelParam::Covariance { sigma, .. } => {
                sigma.as_ref().map_or(f64::NAN, |s| s.trace().as_f64())
            }
            KernelParam::FiniteIdx { gamma } => f64::from(*gamma),
            KernelParam::Direct => f64::NAN,
        }
    }
}

/// Current point together with its cached log-density and a proposal buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<F: Real> {
    pub point: Vec<F>,
    pub log_density: F,
    proposal: Vec<F>,
}

impl<F: Real> ChainState<F> {
    pub fn new(target: &TargetDensity<F>, point: Vec<F>) -> Result<Self> {
        if point.len() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: point.len(),
            });
        }
        let log_density = target.log_density(&point);
        if log_density == F::neg_infinity() || log_density.is_nan() {
            return Err(Error::InvalidStart);
        }
        let proposal = point.clone();
        Ok(Self {
            point,
            log_density,
            proposal,
        })
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// Evaluates the buffered proposal and moves there with the Metropolis
    /// probability, given `u ~ Uniform(0, 1)`.
    fn accept_or_reject(&mut self, target: &TargetDensity<F>, u: F) -> Result<StepOutcome<F>> {
        let lp = target.log_density(&self.proposal);
        if lp.is_nan() || lp == F::of(f64::INFINITY) {
            return Err(Error::NumericOverflow { iteration: 0 });
        }
        let acc_prob = metropolis_acceptance(self.log_density, lp);
        let accepted = u < acc_prob;
        if accepted {
            std::mem::swap(&mut self.point, &mut self.proposal);
            self.log_density = lp;
        }
        Ok(StepOutcome { accepted, acc_prob })
    }
}

/// Result of one continuous-state step. The new state lives in the
/// [`ChainState`] that was stepped; on rejection it is bit-identical to the old one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<F: Real> {
    pub accepted: bool,
    pub acc_prob: F,
}
