//! Target distributions and the test-function catalogue.
//!
//! All continuous targets are unnormalized: samplers only ever look at
//! differences of log-densities.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::scalar::{Exact, Real};

/// Smallest admissible Cholesky pivot for a covariance to count as positive definite.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind<F: Real> {
    /// Student-t with `nu` degrees of freedom on the real line.
    StudentT { nu: F },
    /// Density proportional to `(1 + |x|)^-(1 + r)`.
    PolyTail { r: F },
    /// Zero-mean Gaussian with an explicit covariance.
    GaussianCov {
        covariance: DMatrix<F>,
        precision: DMatrix<F>,
        cholesky: DMatrix<F>,
        /// How many seeds were skipped because the draw was singular.
        regenerations: u32,
    },
    /// Probability vector on `{0, .., n-1}`. The state is read from `x[0]`.
    Finite { probs: Vec<F> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetDensity<F: Real> {
    dim: usize,
    kind: TargetKind<F>,
}

impl<F: Real> TargetDensity<F> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &TargetKind<F> {
        &self.kind
    }

    /// Unnormalized log-density; `-inf` off the support.
    pub fn log_density(&self, x: &[F]) -> F {
        match &self.kind {
            TargetKind::StudentT { nu } => {
                let v = x[0];
                let half = F::of(0.5);
                -(*nu + F::one()) * half * (F::one() + v * v / *nu).ln()
            }
            TargetKind::PolyTail { r } => {
                let v = x[0].abs();
                -(F::one() + *r) * (F::one() + v).ln()
            }
            TargetKind::GaussianCov { precision, .. } => {
                let d = self.dim;
                let mut quad = F::zero();
                for i in 0..d {
                    let mut row = F::zero();
                    for j in 0..d {
                        row += precision[(i, j)] * x[j];
                    }
                    quad += x[i] * row;
                }
                -F::of(0.5) * quad
            }
            TargetKind::Finite { probs } => {
                let s = x[0];
                if s < F::zero() || s.fract() != F::zero() {
                    return F::neg_infinity();
                }
                match s.to_usize().and_then(|i| probs.get(i)) {
                    Some(p) if *p > F::zero() => p.ln(),
                    _ => F::neg_infinity(),
                }
            }
        }
    }

    /// Exact covariance for targets that carry one.
    pub fn covariance(&self) -> Option<&DMatrix<F>> {
        match &self.kind {
            TargetKind::GaussianCov { covariance, .. } => Some(covariance),
            _ => None,
        }
    }

    /// Direct independent draw, where the target admits one.
    pub fn sample_exact<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [F]) -> bool {
        match &self.kind {
            TargetKind::StudentT { nu } => {
                let t = StudentT::new(nu.as_f64()).expect("nu validated at construction");
                out[0] = F::of(t.sample(rng));
                true
            }
            TargetKind::GaussianCov { cholesky, .. } => {
                let d = self.dim;
                let z: Vec<F> = (0..d)
                    .map(|_| F::of(StandardNormal.sample(rng)))
                    .collect();
                for i in 0..d {
                    let mut acc = F::zero();
                    for j in 0..=i {
                        acc += cholesky[(i, j)] * z[j];
                    }
                    out[i] = acc;
                }
                true
            }
            _ => false,
        }
    }
}

pub fn student_t_target<F: Real>(nu: F) -> Result<TargetDensity<F>> {
    if !(nu > F::zero()) || !nu.is_finite() {
        return Err(Error::InvalidTarget(format!(
            "student_t requires nu > 0, got {}",
            nu.as_f64()
        )));
    }
    Ok(TargetDensity {
        dim: 1,
        kind: TargetKind::StudentT { nu },
    })
}

/// Polynomial-tailed target with tail index `r`; the slowly varying factor is
/// taken to be 1 and `|x|` is shifted to `1 + |x|` to keep the density bounded.
pub fn poly_tail_target<F: Real>(r: F) -> Result<TargetDensity<F>> {
    if !(r > F::zero()) || !r.is_finite() {
        return Err(Error::InvalidTarget(format!(
            "poly_tail requires r > 0, got {}",
            r.as_f64()
        )));
    }
    Ok(TargetDensity {
        dim: 1,
        kind: TargetKind::PolyTail { r },
    })
}

/// Fills a `d x d` matrix with standard normal draws in row-major order.
///
/// The generator is ChaCha8 seeded with `seed` via `seed_from_u64`, so the
/// draw order `M[0][0], M[0][1], .., M[d-1][d-1]` is reproducible.
pub fn random_normal_matrix<F: Real>(d: usize, seed: u64) -> DMatrix<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            m[(i, j)] = F::of(z);
        }
    }
    m
}

/// `N(0, M M^T)` with `M` drawn from `seed`. Singular draws move on to `seed + 1`.
pub fn gaussian_random_cov_target<F: Real>(d: usize, seed: u64) -> Result<TargetDensity<F>> {
    if d == 0 {
        return Err(Error::InvalidTarget("gaussian_cov requires d >= 1".into()));
    }
    let mut regenerations = 0u32;
    let mut current = seed;
    loop {
        let m = random_normal_matrix::<F>(d, current);
        let covariance = &m * m.transpose();
        if let Some((cholesky, precision)) = spd_factor(&covariance) {
            return Ok(TargetDensity {
                dim: d,
                kind: TargetKind::GaussianCov {
                    covariance,
                    precision,
                    cholesky,
                    regenerations,
                },
            });
        }
        regenerations += 1;
        current = current.wrapping_add(1);
        if regenerations > 1000 {
            return Err(Error::InvalidTarget(
                "could not draw a nonsingular covariance".into(),
            ));
        }
    }
}

/// Gaussian target with a caller-supplied covariance.
pub fn gaussian_target<F: Real>(covariance: DMatrix<F>) -> Result<TargetDensity<F>> {
    let d = covariance.nrows();
    if d == 0 || covariance.ncols() != d {
        return Err(Error::InvalidTarget("covariance must be square and nonempty".into()));
    }
    let (cholesky, precision) =
        spd_factor(&covariance).ok_or_else(|| Error::NotSpd("covariance".into()))?;
    Ok(TargetDensity {
        dim: d,
        kind: TargetKind::GaussianCov {
            covariance,
            precision,
            cholesky,
            regenerations: 0,
        },
    })
}

/// Lower Cholesky factor and inverse, or `None` when a pivot falls below
/// [`PIVOT_TOLERANCE`].
fn spd_factor<F: Real>(a: &DMatrix<F>) -> Option<(DMatrix<F>, DMatrix<F>)> {
    let chol = nalgebra::Cholesky::new(a.clone())?;
    let l = chol.l();
    let tol = F::of(PIVOT_TOLERANCE);
    if (0..l.nrows()).any(|i| l[(i, i)] * l[(i, i)] < tol) {
        return None;
    }
    let inv = chol.inverse();
    Some((l, inv))
}

/// A probability vector on `{0, .., n-1}` in an exact or floating scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTarget<S: Exact> {
    probs: Vec<S>,
}

impl<S: Exact> FiniteTarget<S> {
    pub fn new(probs: Vec<S>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidTarget("empty probability vector".into()));
        }
        if probs.iter().any(|p| p.is_negative()) {
            return Err(Error::InvalidTarget("negative probability".into()));
        }
        let total = probs.iter().fold(S::zero(), |acc, p| acc + p.clone());
        let err = (total - S::one()).abs();
        if err.to_f64_lossy() > 1e-12 {
            return Err(Error::InvalidTarget(format!(
                "probabilities sum to 1 + {:e}",
                err.to_f64_lossy()
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, state: usize) -> &S {
        &self.probs[state]
    }

    /// Mass of a set of states.
    pub fn mass(&self, states: &[usize]) -> S {
        states
            .iter()
            .fold(S::zero(), |acc, &s| acc + self.probs[s].clone())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.probs.iter().map(Exact::to_f64_lossy).collect()
    }

    pub fn to_density<F: Real>(&self) -> TargetDensity<F> {
        TargetDensity {
            dim: 1,
            kind: TargetKind::Finite {
                probs: self.probs.iter().map(|p| F::of(p.to_f64_lossy())).collect(),
            },
        }
    }
}

/// Four-state target `(eps, eps^3, (1-eps-eps^3)/2, (1-eps-eps^3)/2)` on states `0..4`.
pub fn four_state_target<S: Exact>(eps: S) -> Result<FiniteTarget<S>> {
    if !(eps > S::zero()) {
        return Err(Error::InvalidTarget("eps > 0 violated".into()));
    }
    let cube = eps.clone() * eps.clone() * eps.clone();
    let rest = S::one() - eps.clone() - cube.clone();
    if !(rest > S::zero()) {
        return Err(Error::InvalidTarget("1 - eps - eps^3 > 0 violated".into()));
    }
    let two = S::one() + S::one();
    if rest < two.clone() * eps.clone() {
        return Err(Error::InvalidTarget(
            "1 - eps - eps^3 >= 2 eps violated".into(),
        ));
    }
    let half = rest / two;
    FiniteTarget::new(vec![eps, cube, half.clone(), half])
}

type EvalFn<F> = dyn Fn(&[F]) -> F + Send + Sync;

/// A function whose ergodic average is tracked during a run.
#[derive(Clone)]
pub struct TestFunction<F: Real> {
    pub name: String,
    eval: Arc<EvalFn<F>>,
    pub true_value: Option<F>,
}

impl<F: Real> fmt::Debug for TestFunction<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("true_value", &self.true_value.map(Real::as_f64))
            .finish()
    }
}

impl<F: Real> TestFunction<F> {
    pub fn new(
        name: impl Into<String>,
        true_value: Option<F>,
        eval: impl Fn(&[F]) -> F + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            true_value,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[F]) -> F {
        (self.eval)(x)
    }

    /// `f(x) = x[i]`.
    pub fn coordinate(i: usize, true_value: Option<F>) -> Self {
        Self::new(format!("x{i}"), true_value, move |x| x[i])
    }

    /// `f(x) = x[0]`; for symmetric targets `pi(f) = 0`.
    pub fn identity(true_value: Option<F>) -> Self {
        Self::new("x", true_value, |x| x[0])
    }

    pub fn square(i: usize, true_value: Option<F>) -> Self {
        Self::new(format!("x{i}^2"), true_value, move |x| x[i] * x[i])
    }

    /// `f(x) = 1{x[0] == state}` on a finite state space.
    pub fn indicator_state(state: usize, true_value: Option<F>) -> Self {
        let s = F::of(state as f64);
        Self::new(format!("1[x={state}]"), true_value, move |x| {
            if x[0] == s {
                F::one()
            } else {
                F::zero()
            }
        })
    }

    /// `f(x) = 1{x[0] <= threshold}`.
    pub fn indicator_below(threshold: F, true_value: Option<F>) -> Self {
        Self::new(
            format!("1[x<={}]", threshold.as_f64()),
            true_value,
            move |x| if x[0] <= threshold { F::one() } else { F::zero() },
        )
    }

    pub fn constant(c: F) -> Self {
        Self::new("const", Some(c), move |_| c)
    }
}

/// Student-t CDF through the regularized incomplete beta function.
pub fn student_t_cdf(nu: f64, t: f64) -> f64 {
    let x = nu / (nu + t * t);
    let tail = 0.5 * statrs::function::beta::beta_reg(0.5 * nu, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Student-t quantile by bisection on [`student_t_cdf`].
pub fn student_t_quantile(nu: f64, level: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument("nu must be positive".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument("level must lie in (0, 1)".into()));
    }
    if level < 0.5 {
        return student_t_quantile(nu, 1.0 - level).map(|q| -q);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while student_t_cdf(nu, hi) < level {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(nu, mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn student_t_mode_and_symmetry() {
        let t = student_t_target(10.0).unwrap();
        assert_eq!(t.log_density(&[0.0]), 0.0);
        for x in [0.3, 1.8125, 7.0, 1e5] {
            assert!(t.log_density(&[x]) < 0.0);
            assert_eq!(t.log_density(&[x]), t.log_density(&[-x]));
        }
        assert!(student_t_target(0.0f64).is_err());
        assert!(student_t_target(-1.0f64).is_err());
    }

    #[test]
    fn student_t_quantile_matches_independent_inverse() {
        let q = student_t_quantile(10.0, 0.95).unwrap();
        let oracle = StudentsT::new(0.0, 1.0, 10.0).unwrap().inverse_cdf(0.95);
        assert!((q - oracle).abs() < 1e-9, "{q} vs {oracle}");
        assert!((q - 1.8125).abs() < 1e-3);
        assert!((student_t_quantile(10.0, 0.05).unwrap() + q).abs() < 1e-12);
    }

    #[test]
    fn poly_tail_shape() {
        let t = poly_tail_target(2.0f64).unwrap();
        assert_eq!(t.log_density(&[0.0]), 0.0);
        let x = 1e6;
        let ratio = (t.log_density(&[x]) - t.log_density(&[2.0 * x])).exp();
        assert!((ratio - 8.0).abs() < 1e-4, "{ratio}");
        assert_eq!(t.log_density(&[3.5]), t.log_density(&[-3.5]));
        assert!(poly_tail_target(0.0f64).is_err());
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let left = (m - a) / 6.0 * (f(a) + 4.0 * f(lm) + f(m));
        let right = (b - m) / 6.0 * (f(m) + 4.0 * f(rm) + f(b));
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, a, m, tol / 2.0, depth - 1) + simpson(f, m, b, tol / 2.0, depth - 1)
        }
    }

    #[test]
    fn poly_tail_is_integrable() {
        let t = poly_tail_target(2.0).unwrap();
        let dens = |x: f64| t.log_density(&[x]).exp();
        let mass: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&l| 2.0 * simpson(&dens, 0.0, l, 1e-10, 40))
            .collect();
        assert!(mass[2] - mass[1] < 1e-5);
        assert!(mass[1] - mass[0] < 1e-3);
        assert!((mass[2] - 1.0).abs() < 1e-6, "{mass:?}");
    }

    #[test]
    fn gaussian_scalar_case_is_m_squared() {
        let seed = 17;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: f64 = StandardNormal.sample(&mut rng);
        let t = gaussian_random_cov_target::<f64>(1, seed).unwrap();
        let cov = t.covariance().unwrap();
        assert!((cov[(0, 0)] - m * m).abs() < 1e-15);
    }

    #[test]
    fn gaussian_is_deterministic_and_spd() {
        let a = gaussian_random_cov_target::<f64>(10, 3).unwrap();
        let b = gaussian_random_cov_target::<f64>(10, 3).unwrap();
        assert_eq!(a, b);
        let cov = a.covariance().unwrap().clone();
        assert!((&cov - cov.transpose()).abs().max() < 1e-12);
        let eig = nalgebra::SymmetricEigen::new(cov.clone());
        assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
        let m = random_normal_matrix::<f64>(10, 3);
        assert!((&m * m.transpose() - cov).abs().max() < 1e-12);
    }

    #[test]
    fn gaussian_log_density_matches_quadratic_form() {
        let t = gaussian_random_cov_target::<f64>(4, 9).unwrap();
        let cov = t.covariance().unwrap();
        let x = nalgebra::DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]);
        let sol = cov.clone().lu().solve(&x).unwrap();
        let expect = -0.5 * x.dot(&sol);
        assert!((t.log_density(x.as_slice()) - expect).abs() < 1e-9);
    }

    #[test]
    fn four_state_values() {
        let eps = BigRational::from_ratio(1, 10);
        let t = four_state_target(eps).unwrap();
        let expect = [
            BigRational::from_ratio(1, 10),
            BigRational::from_ratio(1, 1000),
            BigRational::from_ratio(4495, 10000),
            BigRational::from_ratio(4495, 10000),
        ];
        assert_eq!(t.probs(), &expect);
        assert_eq!(t.mass(&[0, 2]), BigRational::from_ratio(5495, 10000));
        let total = t.mass(&[0, 1, 2, 3]);
        assert_eq!(total, BigRational::from_ratio(1, 1));
    }

    #[test]
    fn four_state_rejects_inadmissible_eps() {
        let err = four_state_target(0.4f64).unwrap_err();
        assert!(err.to_string().contains(">= 2 eps"), "{err}");
        assert!(four_state_target(0.0f64).is_err());
        assert!(four_state_target(0.3f64).is_ok());
    }

    #[test]
    fn finite_density_off_support() {
        let t = four_state_target(0.1f64).unwrap().to_density::<f64>();
        assert!((t.log_density(&[0.0]) - 0.1f64.ln()).abs() < 1e-12);
        assert_eq!(t.log_density(&[4.0]), f64::NEG_INFINITY);
        assert_eq!(t.log_density(&[-1.0]), f64::NEG_INFINITY);
        assert_eq!(t.log_density(&[0.5]), f64::NEG_INFINITY);
    }

    #[test]
    fn single_precision_targets() {
        let t = student_t_target(10.0f32).unwrap();
        assert_eq!(t.log_density(&[1.5f32]), t.log_density(&[-1.5f32]));
        let g = gaussian_random_cov_target::<f32>(3, 1).unwrap();
        assert!(g.log_density(&[0.1, 0.2, 0.3]).is_finite());
    }
}
