//! Metropolis-Hastings on `{0, .., n-1}` with nearest-neighbour proposals.
//!
//! `gamma = 1` proposes uniformly from `{x-1, x+1}`, `gamma = 2` from
//! `{x-2, x-1, x+1, x+2}`. Proposals that leave the state space are rejected.

use rand::Rng;

use super::matrix::StochasticMatrix;
use crate::error::{Error, Result};
use crate::scalar::Exact;
use crate::targets::FiniteTarget;

const NEAR: [isize; 2] = [-1, 1];
const WIDE: [isize; 4] = [-2, -1, 1, 2];

pub fn proposal_offsets(gamma: u8) -> Result<&'static [isize]> {
    match gamma {
        1 => Ok(&NEAR),
        2 => Ok(&WIDE),
        g => Err(Error::InvalidParameter(format!("finite gamma must be 1 or 2, got {g}"))),
    }
}

fn acceptance<S: Exact>(from: &S, to: &S) -> S {
    if from.is_zero() {
        return S::one();
    }
    let ratio = to.clone() / from.clone();
    S::min_of(&S::one(), &ratio)
}

/// Exact one-step transition probabilities of [`finite_mh_step`].
pub fn finite_transition_matrix<S: Exact>(
    gamma: u8,
    target: &FiniteTarget<S>,
) -> Result<StochasticMatrix<S>> {
    let offsets = proposal_offsets(gamma)?;
    let n = target.len();
    let share = S::from_ratio(1, offsets.len() as i64);
    let mut rows = vec![vec![S::zero(); n]; n];
    for (x, row) in rows.iter_mut().enumerate() {
        for &o in offsets {
            let y = x as isize + o;
            if y < 0 || y >= n as isize {
                row[x] = row[x].clone() + share.clone();
                continue;
            }
            let y = y as usize;
            let a = acceptance(target.prob(x), target.prob(y));
            row[y] = row[y].clone() + share.clone() * a.clone();
            row[x] = row[x].clone() + share.clone() * (S::one() - a);
        }
    }
    StochasticMatrix::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteStep {
    pub new_state: usize,
    pub accepted: bool,
    pub acc_prob: f64,
}

/// Precomputed acceptance tables for both proposal widths.
#[derive(Debug, Clone)]
pub struct FiniteMh {
    n: usize,
    // [gamma - 1][state][offset index] -> (destination, acceptance probability)
    tables: [Vec<Vec<(Option<usize>, f64)>>; 2],
}

impl FiniteMh {
    pub fn new<S: Exact>(target: &FiniteTarget<S>) -> Self {
        let n = target.len();
        let probs = target.to_f64();
        let build = |offsets: &[isize]| {
            (0..n)
                .map(|x| {
                    offsets
                        .iter()
                        .map(|&o| {
                            let y = x as isize + o;
                            if y < 0 || y >= n as isize {
                                (None, 0.0)
                            } else {
                                let y = y as usize;
                                (Some(y), acceptance(&probs[x], &probs[y]))
                            }
                        })
                        .collect()
                })
                .collect()
        };
        Self {
            n,
            tables: [build(&NEAR), build(&WIDE)],
        }
    }

    pub fn states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, x: usize, gamma: u8, rng: &mut R) -> FiniteStep {
        let row = &self.tables[(gamma - 1) as usize][x];
        let (dest, acc) = row[rng.random_range(0..row.len())];
        match dest {
            Some(y) if acc >= 1.0 || rng.random::<f64>() < acc => FiniteStep {
                new_state: y,
                accepted: true,
                acc_prob: acc,
            },
            _ => FiniteStep {
                new_state: x,
                accepted: false,
                acc_prob: acc,
            },
        }
    }
}

/// One MH step from `x` with proposal width `gamma`.
pub fn finite_mh_step<R: Rng + ?Sized>(
    x: usize,
    gamma: u8,
    kernel: &FiniteMh,
    rng: &mut R,
) -> Result<FiniteStep> {
    proposal_offsets(gamma)?;
    if x >= kernel.states() {
        return Err(Error::InvalidArgument(format!("state {x} outside the state space")));
    }
    Ok(kernel.step(x, gamma, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::four_state_target;
    use num_rational::BigRational;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::from_ratio(n, d)
    }

    #[test]
    fn first_row_under_near_proposal() {
        let eps = q(1, 10);
        let t = four_state_target(eps.clone()).unwrap();
        let p = finite_transition_matrix(1, &t).unwrap();
        let half_eps_sq = eps.clone() * eps.clone() / q(2, 1);
        assert_eq!(p[(0, 1)], half_eps_sq);
        assert_eq!(p[(0, 0)], q(1, 1) - half_eps_sq);
        assert_eq!(p[(0, 2)], q(0, 1));
    }

    #[test]
    fn wide_proposal_last_row() {
        let eps = q(1, 10);
        let t = four_state_target(eps.clone()).unwrap();
        let p = finite_transition_matrix(2, &t).unwrap();
        let rest = q(1, 1) - eps.clone() - eps.clone() * eps.clone() * eps.clone();
        let up = q(2, 1) * eps.clone() * eps.clone() * eps.clone() / rest;
        assert_eq!(p[(3, 2)], q(1, 4));
        assert_eq!(p[(3, 1)], q(1, 4) * up);
        assert_eq!(p[(3, 0)], q(0, 1));
        assert_eq!(p[(3, 3)], q(1, 1) - q(1, 4) - q(1, 4) * q(2, 899));
    }

    #[test]
    fn target_is_invariant_exactly() {
        let t = four_state_target(q(1, 10)).unwrap();
        for g in [1, 2] {
            let p = finite_transition_matrix(g, &t).unwrap();
            assert_eq!(p.left_mul(t.probs()), t.probs());
            assert!(p.row_sums().iter().all(|s| *s == q(1, 1)));
        }
        let tf = four_state_target(0.1f64).unwrap();
        for g in [1, 2] {
            let p = finite_transition_matrix(g, &tf).unwrap();
            let moved = p.left_mul(tf.probs());
            for (a, b) in moved.iter().zip(tf.probs()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_bad_gamma_and_state() {
        let t = four_state_target(0.1f64).unwrap();
        assert!(finite_transition_matrix(3, &t).is_err());
        let k = FiniteMh::new(&t);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(finite_mh_step(4, 1, &k, &mut rng).is_err());
        assert!(finite_mh_step(0, 0, &k, &mut rng).is_err());
    }

    #[test]
    fn rejection_keeps_state() {
        let t = four_state_target(0.1f64).unwrap();
        let k = FiniteMh::new(&t);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let x = rng.random_range(0..4);
            let s = k.step(x, 2, &mut rng);
            if !s.accepted {
                assert_eq!(s.new_state, x);
            }
            assert!((0.0..=1.0).contains(&s.acc_prob));
        }
    }

    #[test]
    fn simulated_frequencies_match_exact_rows() {
        let t = four_state_target(0.1f64).unwrap();
        let k = FiniteMh::new(&t);
        let draws = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for g in [1u8, 2] {
            let p = finite_transition_matrix(g, &t).unwrap();
            for x in 0..4 {
                let mut counts = [0usize; 4];
                for _ in 0..draws {
                    counts[k.step(x, g, &mut rng).new_state] += 1;
                }
                for y in 0..4 {
                    let prob = p[(x, y)];
                    let freq = counts[y] as f64 / draws as f64;
                    let se = (prob * (1.0 - prob) / draws as f64).sqrt();
                    assert!(
                        (freq - prob).abs() <= 3.0 * se + 1e-12,
                        "gamma={g} x={x} y={y}: {freq} vs {prob}"
                    );
                }
            }
        }
    }
}
