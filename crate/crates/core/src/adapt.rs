//! Adaptation rules and the gate that decides whether an adapted value is
//! committed at an adaptation time.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{KernelParam, StepOutcome};
use crate::scalar::Real;

/// Acceptance rate targeted by the scalar scaling rule.
pub const SCALING_TARGET_RATE: f64 = 0.44;
/// Acceptance rate targeted by the per-iteration Robbins-Monro rule.
pub const ACC_TARGET_RATE: f64 = 0.234;
/// Default exponent `s` in the gain sequence `c_k = k^-s`.
pub const DEFAULT_GAIN_EXPONENT: f64 = 0.7;

/// `exp(log gamma + k^-s (rate - target))`.
pub fn scaling_update<F: Real>(gamma: F, epoch_acc_rate: F, k: u64, s: F, target_rate: F) -> F {
    let gain = F::of(k as f64).powf(-s);
    (gamma.ln() + gain * (epoch_acc_rate - target_rate)).exp()
}

/// `exp(log nu + n^-1/2 (acc_prob - target))`.
pub fn acc_target_update<F: Real>(nu: F, acc_prob: F, n: u64, target_rate: F) -> F {
    let gain = F::one() / F::of(n as f64).sqrt();
    (nu.ln() + gain * (acc_prob - target_rate)).exp()
}

/// Proposal-width flip rule of the four-state counterexample.
///
/// From width 1 an accepted move switches to width 2; from width 2 landing
/// on state 0 switches back to width 1. States are indexed from 0.
pub fn counterexample_update(gamma: u8, accepted: bool, new_state: usize) -> u8 {
    match gamma {
        1 if accepted => 2,
        1 => 1,
        _ if new_state == 0 => 1,
        _ => 2,
    }
}

/// Rejects gain exponents for which `sum k^-s` is finite or the gain does not decay.
pub fn validate_gain_exponent(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "gain exponent s must lie in (0, 1) so that sum k^-s diverges, got {s}"
        )))
    }
}

/// Streaming mean and scatter matrix (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate<F: Real> {
    mean: DVector<F>,
    scatter: DMatrix<F>,
    n_seen: u64,
    delta: DVector<F>,
}

impl<F: Real> CovEstimate<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
            n_seen: 0,
            delta: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn mean(&self) -> &DVector<F> {
        &self.mean
    }

    pub fn push(&mut self, x: &[F]) -> Result<()> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        self.n_seen += 1;
        let inv_n = F::one() / F::of(self.n_seen as f64);
        for i in 0..d {
            self.delta[i] = x[i] - self.mean[i];
            self.mean[i] += self.delta[i] * inv_n;
        }
        // scatter += (x - mean_old)(x - mean_new)^T, symmetric by construction
        for i in 0..d {
            let after_i = x[i] - self.mean[i];
            for j in 0..=i {
                let v = self.delta[j] * after_i;
                self.scatter[(i, j)] += v;
            }
        }
        for i in 0..d {
            for j in 0..i {
                self.scatter[(j, i)] = self.scatter[(i, j)];
            }
        }
        Ok(())
    }

    /// Unbiased covariance `scatter / (n - 1)`, unavailable below two samples.
    pub fn sigma(&self) -> Option<DMatrix<F>> {
        if self.n_seen < 2 {
            return None;
        }
        Some(&self.scatter / F::of((self.n_seen - 1) as f64))
    }
}

/// Pure-style wrapper around [`CovEstimate::push`].
pub fn cov_update<F: Real>(mut state: CovEstimate<F>, sample: &[F]) -> Result<CovEstimate<F>> {
    state.push(sample)?;
    Ok(state)
}

/// Configured rule. `None` keeps the initial parameter forever.
#[derive(Debug, Clone, PartialEq)]
pub enum AdaptRule {
    None,
    Scaling { s: f64, target_rate: f64 },
    CovEstimate { burnin: u64 },
    AccTarget { target_rate: f64 },
}

impl AdaptRule {
    pub fn scaling_default() -> Self {
        AdaptRule::Scaling {
            s: DEFAULT_GAIN_EXPONENT,
            target_rate: SCALING_TARGET_RATE,
        }
    }
}

/// Background adaptation state. Updated every iteration; read only at
/// adaptation times.
#[derive(Debug, Clone, PartialEq)]
pub enum AdaptState<F: Real> {
    Fixed(KernelParam<F>),
    Scaling {
        log_gamma: F,
        s: F,
        target_rate: F,
        /// Sum of acceptance probabilities over the current epoch.
        acc_sum: F,
    },
    CovEstimate { estimate: CovEstimate<F>, burnin: u64 },
    AccTarget { log_nu: F, target_rate: F },
}

impl<F: Real> AdaptState<F> {
    pub fn new(rule: &AdaptRule, initial: &KernelParam<F>, dim: usize) -> Result<Self> {
        Ok(match (rule, initial) {
            (AdaptRule::None, p) => AdaptState::Fixed(p.clone()),
            (AdaptRule::Scaling { s, target_rate }, KernelParam::Scalar { gamma }) => {
                AdaptState::Scaling {
                    log_gamma: gamma.ln(),
                    s: F::of(*s),
                    target_rate: F::of(*target_rate),
                    acc_sum: F::zero(),
                }
            }
            (AdaptRule::CovEstimate { burnin }, KernelParam::Covariance { .. }) => {
                AdaptState::CovEstimate {
                    estimate: CovEstimate::new(dim),
                    burnin: *burnin,
                }
            }
            (AdaptRule::AccTarget { target_rate }, KernelParam::AccTarget { nu }) => {
                AdaptState::AccTarget {
                    log_nu: nu.ln(),
                    target_rate: F::of(*target_rate),
                }
            }
            (rule, p) => {
                return Err(Error::Incompatible(format!(
                    "rule {rule:?} cannot adapt parameter {p:?}"
                )))
            }
        })
    }

    /// Per-iteration update after step `iteration` (1-based) produced `state`.
    pub fn observe(&mut self, state: &[F], outcome: &StepOutcome<F>, iteration: u64) -> Result<()> {
        match self {
            AdaptState::Fixed(_) => {}
            AdaptState::Scaling { acc_sum, .. } => *acc_sum += outcome.acc_prob,
            AdaptState::CovEstimate { estimate, burnin } => {
                if iteration > *burnin {
                    estimate.push(state)?;
                }
            }
            AdaptState::AccTarget {
                log_nu,
                target_rate,
            } => {
                let nu = acc_target_update(log_nu.exp(), outcome.acc_prob, iteration, *target_rate);
                *log_nu = nu.ln();
            }
        }
        Ok(())
    }

    /// Called at the end of epoch `k` of length `lag`; resets per-epoch accumulators.
    pub fn end_epoch(&mut self, k: u64, lag: u64) {
        if let AdaptState::Scaling {
            log_gamma,
            s,
            target_rate,
            acc_sum,
        } = self
        {
            let rate = *acc_sum / F::of(lag as f64);
            *log_gamma = scaling_update(log_gamma.exp(), rate, k, *s, *target_rate).ln();
            *acc_sum = F::zero();
        }
    }

    /// The value that would be committed now.
    pub fn current(&self) -> KernelParam<F> {
        match self {
            AdaptState::Fixed(p) => p.clone(),
            AdaptState::Scaling { log_gamma, .. } => KernelParam::Scalar {
                gamma: log_gamma.exp(),
            },
            AdaptState::CovEstimate { estimate, .. } => KernelParam::Covariance {
                sigma: estimate.sigma(),
                n_seen: estimate.n_seen(),
            },
            AdaptState::AccTarget { log_nu, .. } => KernelParam::AccTarget { nu: log_nu.exp() },
        }
    }
}

/// Membership test used by the set gate.
#[derive(Debug, Clone, PartialEq)]
pub enum Region<F: Real> {
    All,
    Empty,
    /// Euclidean ball `|x| <= radius` around the origin.
    Ball { radius: F },
    /// Level set `{x : log pi(x) >= level}`.
    DensityAbove { level: F },
}

impl<F: Real> Region<F> {
    pub fn contains(&self, x: &[F], log_density: F) -> bool {
        match self {
            Region::All => true,
            Region::Empty => false,
            Region::Ball { radius } => {
                let r2 = x.iter().fold(F::zero(), |a, v| a + *v * *v);
                r2 <= *radius * *radius
            }
            Region::DensityAbove { level } => log_density >= *level,
        }
    }
}

/// Success probabilities `p_j` of the coin gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoinSchedule {
    /// `p_j = 1 / j`.
    Harmonic,
    /// `p_j = j^-a`.
    Power { a: f64 },
    Constant { p: f64 },
}

impl CoinSchedule {
    pub fn prob(&self, j: u64) -> f64 {
        let j = j.max(1) as f64;
        match *self {
            CoinSchedule::Harmonic => 1.0 / j,
            CoinSchedule::Power { a } => j.powf(-a),
            CoinSchedule::Constant { p } => p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CoinSchedule::Power { a } if !(a >= 0.0) => {
                Err(Error::InvalidParameter(format!("coin exponent must be >= 0, got {a}")))
            }
            CoinSchedule::Constant { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::InvalidParameter(format!("coin probability {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdaptGate<F: Real> {
    Always,
    InSet(Region<F>),
    Coin(CoinSchedule),
}

/// Whether the adapted parameter may be committed at adaptation `j` (1-based).
pub fn gate_allows<F: Real, R: Rng + ?Sized>(
    gate: &AdaptGate<F>,
    x: &[F],
    log_density: F,
    j: u64,
    rng: &mut R,
) -> bool {
    match gate {
        AdaptGate::Always => true,
        AdaptGate::InSet(region) => region.contains(x, log_density),
        AdaptGate::Coin(coin) => rng.random::<f64>() < coin.prob(j),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scaling_fixed_points_and_values() {
        assert_eq!(scaling_update(2.5, 0.44, 7, 0.7, 0.44), 2.5);
        assert!((scaling_update(1.0, 1.0, 1, 0.7, 0.44) - 0.56f64.exp()).abs() < 1e-15);
        assert!((scaling_update(1.0, 0.0, 1, 0.7, 0.44) - (-0.44f64).exp()).abs() < 1e-15);
        // k = 8: gain 8^-0.7
        let g = 8f64.powf(-0.7);
        assert!((scaling_update(1.0, 0.5, 8, 0.7, 0.44) - (g * 0.06).exp()).abs() < 1e-15);
    }

    #[test]
    fn acc_target_values() {
        assert_eq!(acc_target_update(1.7, 0.234, 9, 0.234), 1.7);
        assert!((acc_target_update(1.0, 1.0, 4, 0.234) - 0.383f64.exp()).abs() < 1e-15);
        let step = |n| (acc_target_update(1.0f64, 1.0, n, 0.234).ln()).abs();
        assert!(step(1_000_000) < step(100) && step(100) < step(1));
    }

    #[test]
    fn counterexample_table() {
        // exhaustive over gamma x accepted x state; rejection at width 1 keeps width 1
        for gamma in [1u8, 2] {
            for accepted in [false, true] {
                for state in 0..4 {
                    let got = counterexample_update(gamma, accepted, state);
                    let expect = match (gamma, accepted, state) {
                        (1, true, _) => 2,
                        (1, false, _) => 1,
                        (2, _, 0) => 1,
                        _ => 2,
                    };
                    assert_eq!(got, expect, "gamma={gamma} accepted={accepted} state={state}");
                }
            }
        }
    }

    #[test]
    fn gain_exponent_validation() {
        assert!(validate_gain_exponent(0.7).is_ok());
        assert!(validate_gain_exponent(1.0).is_err());
        assert!(validate_gain_exponent(0.0).is_err());
    }

    #[test]
    fn covariance_from_two_points() {
        let mut c = CovEstimate::<f64>::new(2);
        c.push(&[0.0, 0.0]).unwrap();
        assert!(c.sigma().is_none());
        let c = cov_update(c, &[2.0, 0.0]).unwrap();
        assert_eq!(c.mean().as_slice(), &[1.0, 0.0]);
        let s = c.sigma().unwrap();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        assert!(CovEstimate::<f64>::new(2).push(&[1.0]).is_err());
    }

    fn batch_cov(xs: &[Vec<f64>]) -> DMatrix<f64> {
        let n = xs.len();
        let d = xs[0].len();
        let mean: Vec<f64> = (0..d).map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n as f64).collect();
        DMatrix::from_fn(d, d, |i, j| {
            xs.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / (n - 1) as f64
        })
    }

    #[test]
    fn streaming_matches_batch_on_ten_thousand_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..3).map(|i| rng.random::<f64>() * (i + 1) as f64 + 5.0).collect())
            .collect();
        let mut c = CovEstimate::new(3);
        for x in &xs {
            c.push(x).unwrap();
        }
        let diff = (c.sigma().unwrap() - batch_cov(&xs)).abs().max();
        assert!(diff < 1e-8, "{diff}");
    }

    proptest! {
        #[test]
        fn streaming_equals_batch(xs in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 2), 2..60)) {
            let mut c = CovEstimate::new(2);
            for x in &xs {
                c.push(x).unwrap();
            }
            let diff = (c.sigma().unwrap() - batch_cov(&xs)).abs().max();
            prop_assert!(diff < 1e-8);
        }

        #[test]
        fn scaling_positive_and_monotone(log_g in -20.0f64..20.0, r1 in 0.0f64..1.0, r2 in 0.0f64..1.0, k in 1u64..10_000) {
            let g = log_g.exp();
            let a = scaling_update(g, r1, k, 0.7, 0.44);
            let b = scaling_update(g, r2, k, 0.7, 0.44);
            prop_assert!(a > 0.0 && b > 0.0);
            if r1 < r2 { prop_assert!(a <= b); }
        }

        #[test]
        fn acc_target_positive(log_nu in -20.0f64..20.0, p in 0.0f64..1.0, n in 1u64..1_000_000) {
            prop_assert!(acc_target_update(log_nu.exp(), p, n, 0.234) > 0.0);
        }
    }

    #[test]
    fn gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = [0.5f64];
        assert!(gate_allows(&AdaptGate::Always, &x, 0.0, 1, &mut rng));
        assert!(gate_allows(&AdaptGate::InSet(Region::All), &x, 0.0, 1, &mut rng));
        assert!(!gate_allows(&AdaptGate::InSet(Region::Empty), &x, 0.0, 1, &mut rng));
        let ball = AdaptGate::InSet(Region::Ball { radius: 1.0 });
        assert!(gate_allows(&ball, &x, 0.0, 1, &mut rng));
        assert!(!gate_allows(&ball, &[2.0], 0.0, 1, &mut rng));
        let level = AdaptGate::InSet(Region::DensityAbove { level: -1.0 });
        assert!(gate_allows(&level, &x, -0.5, 1, &mut rng));
        assert!(!gate_allows(&level, &x, -1.5, 1, &mut rng));
        assert!(CoinSchedule::Constant { p: 1.5 }.validate().is_err());
    }

    #[test]
    fn harmonic_coin_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let gate = AdaptGate::<f64>::Coin(CoinSchedule::Harmonic);
        let n = 10_000u64;
        let allowed = (1..=n)
            .filter(|&j| gate_allows(&gate, &[0.0], 0.0, j, &mut rng))
            .count() as f64;
        let expect: f64 = (1..=n).map(|j| 1.0 / j as f64).sum();
        let var: f64 = (1..=n).map(|j| (1.0 / j as f64) * (1.0 - 1.0 / j as f64)).sum();
        assert!((allowed - expect).abs() <= 3.0 * var.sqrt(), "{allowed} vs {expect}");
    }

    #[test]
    fn scaling_state_resets_accumulator() {
        let init = KernelParam::Scalar { gamma: 1.0f64 };
        let mut st = AdaptState::new(&AdaptRule::scaling_default(), &init, 1).unwrap();
        for i in 1..=4 {
            st.observe(&[0.0], &StepOutcome { accepted: true, acc_prob: 1.0 }, i).unwrap();
        }
        st.end_epoch(1, 4);
        let KernelParam::Scalar { gamma } = st.current() else { panic!() };
        assert!((gamma - 0.56f64.exp()).abs() < 1e-12);
        match st {
            AdaptState::Scaling { acc_sum, .. } => assert_eq!(acc_sum, 0.0),
            _ => unreachable!(),
        }
        assert!(AdaptState::new(&AdaptRule::scaling_default(), &KernelParam::<f64>::Direct, 1).is_err());
    }
}
