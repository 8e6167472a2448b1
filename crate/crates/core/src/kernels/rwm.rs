use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ChainState, StepOutcome};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::targets::TargetDensity;

/// `min(1, pi(y) / pi(x))` from log-densities.
#[inline]
pub fn metropolis_acceptance<F: Real>(log_from: F, log_to: F) -> F {
    let diff = log_to - log_from;
    if diff >= F::zero() {
        F::one()
    } else {
        diff.exp()
    }
}

/// Random-walk Metropolis step with proposal `N(x, gamma I)`.
pub fn rwm_step<F: Real, R: Rng + ?Sized>(
    state: &mut ChainState<F>,
    gamma: F,
    target: &TargetDensity<F>,
    rng: &mut R,
) -> Result<StepOutcome<F>> {
    if !(gamma > F::zero()) {
        return Err(Error::InvalidParameter(format!(
            "proposal variance must be positive, got {}",
            gamma.as_f64()
        )));
    }
    let sd = gamma.sqrt();
    for (y, &x) in state.proposal.iter_mut().zip(&state.point) {
        let z: f64 = StandardNormal.sample(rng);
        *y = x + sd * F::of(z);
    }
    let u = F::of(rng.random::<f64>());
    state.accept_or_reject(target, u)
}
