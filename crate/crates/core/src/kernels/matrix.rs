use std::ops::Index;

use crate::error::{Error, Result};
use crate::scalar::Exact;

/// Dense row-stochastic matrix over a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix<S: Exact> {
    n: usize,
    data: Vec<S>,
}

impl<S: Exact> StochasticMatrix<S> {
    /// Builds from rows; every row must be nonnegative and sum to one
    /// (exactly for exact scalars, within 1e-12 otherwise).
    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("matrix must be square and nonempty".into()));
        }
        let m = Self {
            n,
            data: rows.into_iter().flatten().collect(),
        };
        for (i, total) in m.row_sums().iter().enumerate() {
            let err = (total.clone() - S::one()).abs().to_f64_lossy();
            let bad = if S::is_exact() { err != 0.0 } else { err > 1e-12 };
            if bad || m.row(i).iter().any(|p| p.is_negative()) {
                return Err(Error::InvalidArgument(format!("row {i} is not a probability vector")));
            }
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![S::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = S::one();
        }
        Self { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sums(&self) -> Vec<S> {
        (0..self.n)
            .map(|i| self.row(i).iter().fold(S::zero(), |a, p| a + p.clone()))
            .collect()
    }

    /// Row vector times matrix: the law after one step from `mu`.
    pub fn left_mul(&self, mu: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.n];
        for (i, m) in mu.iter().enumerate() {
            if m.is_zero() {
                continue;
            }
            for (j, p) in self.row(i).iter().enumerate() {
                out[j] = out[j].clone() + m.clone() * p.clone();
            }
        }
        out
    }

    /// Matrix times column vector: `(P V)(x) = sum_y P(x, y) V(y)`.
    pub fn apply(&self, v: &[S]) -> Vec<S> {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(S::zero(), |a, (p, w)| a + p.clone() * w.clone())
            })
            .collect()
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut data = vec![S::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = &self.data[i * n + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] = data[i * n + j].clone() + a.clone() * other.data[k * n + j].clone();
                }
            }
        }
        Self { n, data }
    }

    /// `P^k` by repeated squaring. With rounding scalars each product is
    /// renormalised to unit row sums; otherwise the row-sum error doubles
    /// with every squaring.
    pub fn pow(&self, mut k: u64) -> Self {
        let mut result = Self::identity(self.n);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base).renormalised();
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base).renormalised();
            }
        }
        result
    }

    fn renormalised(mut self) -> Self {
        if S::is_exact() {
            return self;
        }
        let n = self.n;
        for i in 0..n {
            let total = self.row(i).iter().fold(S::zero(), |a, p| a + p.clone());
            for p in &mut self.data[i * n..(i + 1) * n] {
                *p = p.clone() / total.clone();
            }
        }
        self
    }

    pub fn map<T: Exact>(&self, f: impl Fn(&S) -> T) -> StochasticMatrix<T> {
        StochasticMatrix {
            n: self.n,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn to_f64(&self) -> StochasticMatrix<f64> {
        self.map(Exact::to_f64_lossy)
    }
}

impl<S: Exact> Index<(usize, usize)> for StochasticMatrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.n + j]
    }
}

/// Total variation distance `sup_A |mu(A) - nu(A)| = 0.5 * sum |mu - nu|`.
pub fn total_variation(mu: &[f64], nu: &[f64]) -> f64 {
    0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Draws an index from a discrete distribution given as weights summing to one.
pub fn sample_discrete<R: rand::Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // round-off: fall back to the last state with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn high_powers_stay_stochastic() {
        let p = StochasticMatrix::from_rows(vec![
            vec![0.1f64, 0.9, 0.0],
            vec![0.3, 0.3, 0.4],
            vec![0.0, 0.7, 0.3],
        ])
        .unwrap();
        let q = p.pow(1 << 50);
        for total in q.row_sums() {
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    fn two_state(p: f64, q: f64) -> StochasticMatrix<f64> {
        StochasticMatrix::from_rows(vec![vec![1.0 - p, p], vec![q, 1.0 - q]]).unwrap()
    }

    #[test]
    fn pow_matches_repeated_multiplication() {
        let m = two_state(0.3, 0.1);
        let mut direct = StochasticMatrix::identity(2);
        for _ in 0..13 {
            direct = direct.mul(&m);
        }
        let fast = m.pow(13);
        for i in 0..2 {
            for j in 0..2 {
                assert!((direct[(i, j)] - fast[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(StochasticMatrix::from_rows(vec![vec![0.5, 0.4], vec![0.0, 1.0]]).is_err());
        assert!(StochasticMatrix::from_rows(vec![vec![1.5, -0.5], vec![0.0, 1.0]]).is_err());
        assert!(StochasticMatrix::<f64>::from_rows(vec![vec![1.0]]).is_ok());
    }

    #[test]
    fn total_variation_bounds() {
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    }
}
