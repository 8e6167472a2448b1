//! Adaptive Metropolis mixture proposal
//! `0.9 N(x, (2.38^2 / d) Sigma_n) + 0.1 N(x, (0.1^2 / d) I)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ChainState, StepOutcome};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::targets::{TargetDensity, PIVOT_TOLERANCE};

pub const AM_SCALE: f64 = 2.38;
pub const AM_LOCAL_SCALE: f64 = 0.1;
pub const AM_MIXTURE_WEIGHT: f64 = 0.9;

/// Frozen proposal for one epoch.
///
/// `factor` is the lower Cholesky factor of `(2.38^2 / d) Sigma_n`; when it is
/// absent (warm-up or a degenerate estimate) only the local component is used.
#[derive(Debug, Clone, PartialEq)]
pub struct AmProposal<F: Real> {
    dim: usize,
    factor: Option<DMatrix<F>>,
    local_sd: F,
}

impl<F: Real> AmProposal<F> {
    pub fn local_only(dim: usize) -> Self {
        Self {
            dim,
            factor: None,
            local_sd: F::of(AM_LOCAL_SCALE) / F::of(dim as f64).sqrt(),
        }
    }

    /// Builds the proposal from an estimate seen over `n_seen` states.
    ///
    /// Returns the proposal and `true` when the estimate was present but its
    /// Cholesky factorisation failed (a degeneracy event).
    pub fn from_estimate(dim: usize, sigma: Option<&DMatrix<F>>, n_seen: u64) -> (Self, bool) {
        let mut out = Self::local_only(dim);
        let Some(sigma) = sigma else {
            return (out, false);
        };
        if n_seen <= 2 * dim as u64 {
            return (out, false);
        }
        let scale = F::of(AM_SCALE * AM_SCALE / dim as f64);
        match nalgebra::Cholesky::new(sigma.clone()) {
            Some(c) => {
                let l = c.l();
                let tol = F::of(PIVOT_TOLERANCE);
                if (0..dim).any(|i| l[(i, i)] * l[(i, i)] < tol) {
                    return (out, true);
                }
                out.factor = Some(l * scale.sqrt());
                (out, false)
            }
            None => (out, true),
        }
    }

    pub fn is_warm(&self) -> bool {
        self.factor.is_some()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// One AM step. The Bernoulli(0.9) component choice is drawn from `rng` only
/// once the covariance component is available.
pub fn am_mixture_step<F: Real, R: Rng + ?Sized>(
    state: &mut ChainState<F>,
    proposal: &AmProposal<F>,
    target: &TargetDensity<F>,
    rng: &mut R,
) -> Result<StepOutcome<F>> {
    let d = proposal.dim;
    if state.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: state.dim(),
        });
    }
    let use_cov = match &proposal.factor {
        Some(_) => rng.random::<f64>() < AM_MIXTURE_WEIGHT,
        None => false,
    };
    match (&proposal.factor, use_cov) {
        (Some(l), true) => {
            // reuse the proposal buffer for z, then overwrite with x + L z in reverse row order
            for z in state.proposal.iter_mut() {
                let v: f64 = StandardNormal.sample(rng);
                *z = F::of(v);
            }
            for i in (0..d).rev() {
                let mut acc = F::zero();
                for j in 0..=i {
                    acc += l[(i, j)] * state.proposal[j];
                }
                state.proposal[i] = state.point[i] + acc;
            }
        }
        _ => {
            for (y, &x) in state.proposal.iter_mut().zip(&state.point) {
                let v: f64 = StandardNormal.sample(rng);
                *y = x + proposal.local_sd * F::of(v);
            }
        }
    }
    let u = F::of(rng.random::<f64>());
    state.accept_or_reject(target, u)
}
