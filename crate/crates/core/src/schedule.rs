//! Lag schedules: the epoch lengths `n_k` and adaptation times `N_j = n_1 + .. + n_j`.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LagKind {
    /// `n_k = max(1, floor(c k^beta))`.
    Polynomial { c: f64, beta: f64 },
    /// Polynomial base lag plus a uniform integer in `0..=floor(base^delta)`.
    Randomized { c: f64, beta: f64, delta: f64 },
    /// `n_k = n` for every `k`; `n = 1` is ordinary every-step adaptation.
    Constant { n: u64 },
}

/// Sequential lag generator. `k` is the index of the next lag to emit.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSchedule {
    kind: LagKind,
    k: u64,
}

/// Result of [`LagSchedule::adaptation_count`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptationCount {
    Exact(u64),
    /// Bounds for a randomized schedule.
    Range { min: u64, max: u64 },
}

impl LagSchedule {
    pub fn new(kind: LagKind) -> Result<Self> {
        match kind {
            LagKind::Polynomial { c, beta } => check_poly(c, beta)?,
            LagKind::Randomized { c, beta, delta } => {
                check_poly(c, beta)?;
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::InvalidSchedule(format!("delta must lie in (0, 1), got {delta}")));
                }
            }
            LagKind::Constant { n } => {
                if n == 0 {
                    return Err(Error::InvalidSchedule("constant lag must be >= 1".into()));
                }
            }
        }
        Ok(Self { kind, k: 1 })
    }

    pub fn polynomial(c: f64, beta: f64) -> Result<Self> {
        Self::new(LagKind::Polynomial { c, beta })
    }

    pub fn constant(n: u64) -> Result<Self> {
        Self::new(LagKind::Constant { n })
    }

    pub fn kind(&self) -> LagKind {
        self.kind
    }

    /// Index of the lag the next call to [`next_lag`](Self::next_lag) returns.
    pub fn counter(&self) -> u64 {
        self.k
    }

    pub fn is_random(&self) -> bool {
        matches!(self.kind, LagKind::Randomized { .. })
    }

    /// Deterministic part of lag `k`.
    pub fn base_lag(&self, k: u64) -> u64 {
        match self.kind {
            LagKind::Polynomial { c, beta } | LagKind::Randomized { c, beta, .. } => {
                poly_lag(c, beta, k)
            }
            LagKind::Constant { n } => n,
        }
    }

    /// Largest extra the randomized kind may add to `base`.
    pub fn max_extra(&self, base: u64) -> u64 {
        match self.kind {
            LagKind::Randomized { delta, .. } => (base as f64).powf(delta).floor() as u64,
            _ => 0,
        }
    }

    /// Emits `n_k` and advances `k`. Deterministic kinds ignore `rng`.
    pub fn next_lag<R: Rng + ?Sized>(&mut self, rng: Option<&mut R>) -> Result<u64> {
        let base = self.base_lag(self.k);
        let lag = match self.kind {
            LagKind::Randomized { .. } => {
                let rng = rng.ok_or(Error::MissingRng)?;
                base + rng.random_range(0..=self.max_extra(base))
            }
            _ => base,
        };
        self.k += 1;
        Ok(lag)
    }

    /// Deterministic variant of [`next_lag`](Self::next_lag).
    pub fn next_fixed(&mut self) -> Result<u64> {
        self.next_lag::<rand::rngs::ThreadRng>(None)
    }

    /// Number of adaptation times `N_j <= horizon`, counting from lag 1.
    pub fn adaptation_count(&self, horizon: u64) -> AdaptationCount {
        let count_with = |extra: bool| {
            let mut total = 0u64;
            let mut j = 0u64;
            loop {
                let base = self.base_lag(j + 1);
                let lag = if extra { base + self.max_extra(base) } else { base };
                match total.checked_add(lag) {
                    Some(t) if t <= horizon => {
                        total = t;
                        j += 1;
                    }
                    _ => return j,
                }
            }
        };
        if self.is_random() {
            AdaptationCount::Range {
                min: count_with(true),
                max: count_with(false),
            }
        } else {
            AdaptationCount::Exact(count_with(false))
        }
    }

    /// Adaptation times `N_1, .., N_j` for a deterministic schedule.
    pub fn adaptation_times(&self, count: usize) -> Vec<u64> {
        let mut total = 0u64;
        (1..=count as u64)
            .map(|k| {
                total += self.base_lag(k);
                total
            })
            .collect()
    }
}

fn check_poly(c: f64, beta: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidSchedule(format!("c must be positive, got {c}")));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidSchedule(format!("beta must be nonnegative, got {beta}")));
    }
    Ok(())
}

/// `max(1, floor(c k^beta))`. The tiny offset keeps exact integer powers
/// such as `5^2` from flooring one below through round-off.
fn poly_lag(c: f64, beta: f64, k: u64) -> u64 {
    let v = c * (k as f64).powf(beta);
    ((v * (1.0 + 1e-12)).floor() as u64).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn polynomial_lags() {
        let mut s = LagSchedule::polynomial(1.0, 1.0).unwrap();
        let lags: Vec<u64> = (0..5).map(|_| s.next_fixed().unwrap()).collect();
        assert_eq!(lags, vec![1, 2, 3, 4, 5]);

        let mut s = LagSchedule::polynomial(1.0, 2.0).unwrap();
        let lags: Vec<u64> = (0..3).map(|_| s.next_fixed().unwrap()).collect();
        assert_eq!(lags, vec![1, 4, 9]);
        assert_eq!(s.adaptation_times(3), vec![1, 5, 14]);
    }

    #[test]
    fn constant_one_is_every_step() {
        let mut s = LagSchedule::constant(1).unwrap();
        assert!((0..100).all(|_| s.next_fixed().unwrap() == 1));
        assert_eq!(s.adaptation_count(100), AdaptationCount::Exact(100));
        assert!(LagSchedule::constant(0).is_err());
    }

    #[test]
    fn small_c_is_clamped() {
        let mut s = LagSchedule::polynomial(0.1, 1.0).unwrap();
        assert_eq!(s.next_fixed().unwrap(), 1);
    }

    #[test]
    fn adaptation_counts_over_a_hundred_thousand_steps() {
        // brute-force summation of floor(k^beta)
        let brute = |beta: u32| {
            let (mut total, mut j) = (0u64, 0u64);
            loop {
                let lag = (j + 1).pow(beta);
                if total + lag > 100_000 {
                    return j;
                }
                total += lag;
                j += 1;
            }
        };
        for (beta, expect) in [(1.0, 446), (2.0, 66), (3.0, 24)] {
            let s = LagSchedule::polynomial(1.0, beta).unwrap();
            assert_eq!(s.adaptation_count(100_000), AdaptationCount::Exact(expect));
            assert_eq!(brute(beta as u32), expect);
        }
    }

    #[test]
    fn randomized_requires_rng() {
        let mut s = LagSchedule::new(LagKind::Randomized {
            c: 1.0,
            beta: 2.0,
            delta: 0.5,
        })
        .unwrap();
        assert_eq!(s.next_lag::<ChaCha8Rng>(None), Err(Error::MissingRng));
        assert!(matches!(s.adaptation_count(1000), AdaptationCount::Range { min, max } if min <= max));
    }

    #[test]
    fn invalid_parameters() {
        assert!(LagSchedule::polynomial(1.0, -0.5).is_err());
        assert!(LagSchedule::polynomial(0.0, 1.0).is_err());
        assert!(LagSchedule::new(LagKind::Randomized { c: 1.0, beta: 1.0, delta: 1.0 }).is_err());
    }

    #[test]
    fn growth_law_at_ten_thousand() {
        for beta in [1.0, 2.0, 3.0] {
            let s = LagSchedule::polynomial(1.0, beta).unwrap();
            let j = 10_000usize;
            let n_j = *s.adaptation_times(j).last().unwrap() as f64;
            let ratio = n_j / (j as f64).powf(1.0 + beta);
            let expect = 1.0 / (1.0 + beta);
            assert!((ratio - expect).abs() / expect < 0.02, "beta={beta}: {ratio}");
        }
    }

    proptest! {
        #[test]
        fn polynomial_is_monotone(c in 0.1f64..5.0, beta in 0.01f64..3.0) {
            let mut s = LagSchedule::polynomial(c, beta).unwrap();
            let mut prev = 0;
            for _ in 0..200 {
                let lag = s.next_fixed().unwrap();
                prop_assert!(lag >= prev);
                prev = lag;
            }
        }

        #[test]
        fn randomized_sandwich(c in 0.5f64..3.0, beta in 0.1f64..2.5, delta in 0.05f64..0.95, seed in any::<u64>()) {
            let mut s = LagSchedule::new(LagKind::Randomized { c, beta, delta }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in 1..300u64 {
                let base = s.base_lag(k);
                let lag = s.next_lag(Some(&mut rng)).unwrap();
                let bound = ((base as f64).powf(delta)).floor() as u64;
                prop_assert!(base <= lag && lag <= base + bound);
            }
        }

        #[test]
        fn randomized_is_reproducible(seed in any::<u64>()) {
            let kind = LagKind::Randomized { c: 1.0, beta: 1.5, delta: 0.5 };
            let run = || {
                let mut s = LagSchedule::new(kind).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..100).map(|_| s.next_lag(Some(&mut rng)).unwrap()).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }

        #[test]
        fn lag_ratio_is_bounded(c in 0.5f64..4.0, beta in 0.5f64..3.0) {
            let s = LagSchedule::polynomial(c, beta).unwrap();
            for k in 20..400u64 {
                let r = s.base_lag(k) as f64 / (k as f64).powf(beta);
                prop_assert!(r >= c / 2.0 && r <= 2.0 * c);
            }
        }
    }
}
