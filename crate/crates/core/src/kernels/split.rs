//! Simultaneous minorization certificates and the split chain built on them.

use rand::Rng;

use super::matrix::{sample_discrete, StochasticMatrix};
use crate::error::{Error, Result};
use crate::scalar::Exact;

/// `delta * nu(y) <= P(x, y)` for every kernel in a family, every `x` in
/// `small_set` and every `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorizationCert<S: Exact> {
    pub small_set: Vec<usize>,
    pub delta: S,
    pub nu: Vec<S>,
}

impl<S: Exact> MinorizationCert<S> {
    /// Re-checks the defining inequality against `kernels`.
    pub fn holds_for(&self, kernels: &[StochasticMatrix<S>]) -> bool {
        kernels.iter().all(|p| {
            self.small_set.iter().all(|&x| {
                self.nu
                    .iter()
                    .enumerate()
                    .all(|(y, n)| self.delta.clone() * n.clone() <= p[(x, y)])
            })
        })
    }

    pub fn contains(&self, x: usize) -> bool {
        self.small_set.contains(&x)
    }

    pub fn to_f64(&self) -> MinorizationCert<f64> {
        MinorizationCert {
            small_set: self.small_set.clone(),
            delta: self.delta.to_f64_lossy(),
            nu: self.nu.iter().map(Exact::to_f64_lossy).collect(),
        }
    }
}

/// Largest simultaneous minorization on `small_set`: `m(y) = min P_g(x, y)`
/// over the family and `x` in the set, `delta = sum m`, `nu = m / delta`.
///
/// Returns `Ok(None)` when `delta = 0`, i.e. the set is not small for the family.
pub fn compute_minorization<S: Exact>(
    kernels: &[StochasticMatrix<S>],
    small_set: &[usize],
) -> Result<Option<MinorizationCert<S>>> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty kernel family".into()))?;
    if small_set.is_empty() {
        return Err(Error::InvalidArgument("small set must be nonempty".into()));
    }
    let n = first.size();
    if kernels.iter().any(|k| k.size() != n) || small_set.iter().any(|&x| x >= n) {
        return Err(Error::InvalidArgument("small set or kernel sizes inconsistent".into()));
    }
    let floor: Vec<S> = (0..n)
        .map(|y| {
            kernels
                .iter()
                .flat_map(|p| small_set.iter().map(move |&x| p[(x, y)].clone()))
                .reduce(|a, b| S::min_of(&a, &b))
                .expect("nonempty family and set")
        })
        .collect();
    let delta = floor.iter().fold(S::zero(), |a, m| a + m.clone());
    if delta <= S::zero() {
        return Ok(None);
    }
    let nu = floor.into_iter().map(|m| m / delta.clone()).collect();
    let mut set = small_set.to_vec();
    set.sort_unstable();
    set.dedup();
    Ok(Some(MinorizationCert {
        small_set: set,
        delta,
        nu,
    }))
}

/// Split-chain sampler for a single kernel with a valid certificate.
///
/// From `x` in the small set the chain regenerates (draws from `nu`) with
/// probability `delta`, otherwise it moves by the residual kernel
/// `(P(x, .) - delta nu) / (1 - delta)`. Outside the set it moves by `P`.
#[derive(Debug, Clone)]
pub struct SplitChain {
    kernel: StochasticMatrix<f64>,
    delta: f64,
    nu: Vec<f64>,
    in_set: Vec<bool>,
    residual: Vec<Option<Vec<f64>>>,
}

impl SplitChain {
    pub fn new(kernel: &StochasticMatrix<f64>, cert: &MinorizationCert<f64>) -> Result<Self> {
        let n = kernel.size();
        if cert.nu.len() != n || cert.small_set.iter().any(|&x| x >= n) {
            return Err(Error::CertificateViolation("certificate size mismatch".into()));
        }
        if !(cert.delta > 0.0 && cert.delta <= 1.0) {
            return Err(Error::CertificateViolation(format!("delta = {}", cert.delta)));
        }
        let mut in_set = vec![false; n];
        for &x in &cert.small_set {
            in_set[x] = true;
        }
        let mut residual = vec![None; n];
        for x in 0..n {
            if !in_set[x] || cert.delta >= 1.0 {
                continue;
            }
            let mut row = Vec::with_capacity(n);
            for y in 0..n {
                let r = (kernel[(x, y)] - cert.delta * cert.nu[y]) / (1.0 - cert.delta);
                if r < -1e-12 {
                    return Err(Error::CertificateViolation(format!(
                        "residual kernel negative at ({x}, {y}): {r:e}"
                    )));
                }
                row.push(r.max(0.0));
            }
            residual[x] = Some(row);
        }
        Ok(Self {
            kernel: kernel.clone(),
            delta: cert.delta,
            nu: cert.nu.clone(),
            in_set,
            residual,
        })
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// One split-chain move. Returns the next state and whether it was a regeneration.
    pub fn step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> (usize, bool) {
        if !self.in_set[x] {
            return (sample_discrete(self.kernel.row(x), rng), false);
        }
        if rng.random::<f64>() < self.delta {
            return (sample_discrete(&self.nu, rng), true);
        }
        let row = self.residual[x].as_deref().expect("residual built for set members");
        (sample_discrete(row, rng), false)
    }
}

/// One split-chain step. The returned flag is the regeneration indicator.
pub fn split_chain_step<R: Rng + ?Sized>(
    x: usize,
    chain: &SplitChain,
    rng: &mut R,
) -> Result<(usize, bool)> {
    if x >= chain.in_set.len() {
        return Err(Error::InvalidArgument(format!("state {x} outside the state space")));
    }
    Ok(chain.step(x, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::finite::finite_transition_matrix;
    use crate::targets::four_state_target;
    use num_rational::BigRational;
    use num_traits::Signed;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn family<S: Exact>(eps: S) -> Vec<StochasticMatrix<S>> {
        let t = four_state_target(eps).unwrap();
        vec![
            finite_transition_matrix(1, &t).unwrap(),
            finite_transition_matrix(2, &t).unwrap(),
        ]
    }

    #[test]
    fn single_state_set_gives_its_row() {
        let ks = family(0.1f64);
        let cert = compute_minorization(&ks[..1], &[2]).unwrap().unwrap();
        assert!((cert.delta - 1.0).abs() < 1e-15);
        for y in 0..4 {
            assert!((cert.nu[y] - ks[0][(2, y)]).abs() < 1e-15);
        }
    }

    #[test]
    fn counterexample_family_is_minorized_on_states_zero_and_two() {
        let ks = family(BigRational::from_ratio(1, 10));
        let cert = compute_minorization(&ks, &[0, 2]).unwrap().unwrap();
        assert!(cert.delta.is_positive());
        assert!(cert.holds_for(&ks));
        // elementwise minimum by hand: only the move into state 1 is common to all rows
        let m01 = ks.iter().map(|k| k[(0, 1)].clone()).chain(ks.iter().map(|k| k[(2, 1)].clone()));
        let expect = m01.reduce(|a, b| if b < a { b } else { a }).unwrap();
        assert_eq!(cert.delta, expect);
        assert_eq!(cert.nu[1], BigRational::from_ratio(1, 1));
    }

    #[test]
    fn absent_minorization_is_reported() {
        let id = StochasticMatrix::<f64>::identity(3);
        assert!(compute_minorization(&[id], &[0, 1]).unwrap().is_none());
        assert!(compute_minorization::<f64>(&[], &[0]).is_err());
        let ks = family(0.1f64);
        assert!(compute_minorization(&ks, &[]).is_err());
    }

    #[test]
    fn residual_violation_is_a_hard_error() {
        let ks = family(0.1f64);
        let bogus = MinorizationCert {
            small_set: vec![0],
            delta: 0.5,
            nu: vec![0.0, 0.0, 1.0, 0.0],
        };
        assert!(matches!(
            SplitChain::new(&ks[0], &bogus),
            Err(Error::CertificateViolation(_))
        ));
    }

    #[test]
    fn outside_the_set_never_regenerates() {
        let ks = family(0.1f64);
        let cert = compute_minorization(&ks, &[0, 2]).unwrap().unwrap();
        let chain = SplitChain::new(&ks[1], &cert).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            assert!(!split_chain_step(3, &chain, &mut rng).unwrap().1);
            assert!(!split_chain_step(1, &chain, &mut rng).unwrap().1);
        }
    }

    #[test]
    fn split_marginal_matches_kernel_row() {
        let ks = family(0.1f64);
        let cert = compute_minorization(&ks, &[0, 2]).unwrap().unwrap();
        let draws = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in &ks {
            let chain = SplitChain::new(k, &cert).unwrap();
            for x in [0usize, 2, 3] {
                let mut counts = [0usize; 4];
                for _ in 0..draws {
                    counts[chain.step(x, &mut rng).0] += 1;
                }
                for y in 0..4 {
                    let p = k[(x, y)];
                    let se = (p * (1.0 - p) / draws as f64).sqrt();
                    let f = counts[y] as f64 / draws as f64;
                    assert!((f - p).abs() <= 3.0 * se + 1e-12, "x={x} y={y} {f} vs {p}");
                }
            }
        }
    }
}
