//! Diagnostics on chain output and exact checks on finite chains.

use nalgebra::DMatrix;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::adapt::counterexample_update;
use crate::error::{Error, Result};
use crate::kernels::{
    finite_transition_matrix, total_variation, MinorizationCert, SplitChain, StochasticMatrix,
};
use crate::runner::ChainOutput;
use crate::scalar::{Exact, Real};
use crate::targets::{four_state_target, FiniteTarget, TestFunction};

/// `(1/N) sum_{i<N} f(X_i)` for a function registered in the run, or one
/// evaluated on unthinned stored samples.
pub fn ergodic_average<F: Real>(output: &ChainOutput<F>, f: &TestFunction<F>) -> Result<F> {
    let n = F::of(output.iterations as f64);
    if let Some(i) = output.function_names.iter().position(|name| *name == f.name) {
        return Ok(output.function_sums[i] / n);
    }
    if output.stride == Some(1) && output.sample_count() as u64 == output.iterations {
        let mut sum = F::zero();
        for i in 0..output.sample_count() {
            sum += f.eval(output.sample(i));
        }
        return Ok(sum / n);
    }
    Err(Error::UnregisteredFunction(f.name.clone()))
}

/// Running sums of a registered function at the given `N`, read from the
/// checkpoints of the run.
fn sums_at<F: Real>(output: &ChainOutput<F>, index: usize, grid: &[u64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&n| {
            if n == output.iterations {
                return Ok(output.function_sums[index].as_f64());
            }
            output
                .checkpoint_sums
                .iter()
                .find(|(t, _)| *t == n)
                .map(|(_, s)| s[index].as_f64())
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("N = {n} was not a checkpoint of the run"))
                })
        })
        .collect()
}

/// Roughly `per_decade` log-spaced integers from `min` to `max`, both included.
pub fn geometric_grid(min: u64, max: u64, per_decade: u32) -> Vec<u64> {
    if min == 0 || max < min || per_decade == 0 {
        return Vec::new();
    }
    let (lo, hi) = ((min as f64).log10(), (max as f64).log10());
    let steps = ((hi - lo) * per_decade as f64).ceil().max(1.0) as u32;
    let mut grid: Vec<u64> = (0..=steps)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / steps as f64).round() as u64)
        .map(|n| n.clamp(min, max))
        .collect();
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Grid points that entered the fit.
    pub grid: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsePoint {
    pub n: u64,
    pub mse: f64,
    /// Standard error of the mean of the squared errors.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub points: Vec<MsePoint>,
    pub fit: Option<RateFit>,
}

/// Least squares line through `(log10 N, log10 MSE)`, ignoring grid points
/// in the first decade above the smallest `N`. `None` with fewer than five
/// points left or a nonpositive MSE.
pub fn fit_rate(points: &[MsePoint]) -> Option<RateFit> {
    let n_min = points.iter().map(|p| p.n).min()?;
    let kept: Vec<&MsePoint> = points.iter().filter(|p| p.n >= 10 * n_min).collect();
    if kept.len() < 5 || kept.iter().any(|p| !(p.mse > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = kept.iter().map(|p| (p.n as f64).log10()).collect();
    let ys: Vec<f64> = kept.iter().map(|p| p.mse.log10()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        grid: kept.iter().map(|p| p.n).collect(),
    })
}

/// Mean squared error of the ergodic average of `f` over replications, at
/// each `N` of the grid. Every grid point must be a checkpoint of the runs
/// (or their final iteration).
pub fn mse_curve<F: Real>(
    replications: &[ChainOutput<F>],
    f: &TestFunction<F>,
    true_value: f64,
    grid: &[u64],
) -> Result<MseCurve> {
    if replications.len() < 50 {
        return Err(Error::InsufficientData(format!(
            "mse needs at least 50 replications, got {}",
            replications.len()
        )));
    }
    let mut sq = vec![Vec::with_capacity(replications.len()); grid.len()];
    for out in replications {
        let index = out
            .function_names
            .iter()
            .position(|name| *name == f.name)
            .ok_or_else(|| Error::UnregisteredFunction(f.name.clone()))?;
        for (i, (s, &n)) in sums_at(out, index, grid)?.iter().zip(grid).enumerate() {
            sq[i].push((s / n as f64 - true_value).powi(2));
        }
    }
    let points: Vec<MsePoint> = grid
        .iter()
        .zip(&sq)
        .map(|(&n, errs)| {
            let r = errs.len() as f64;
            let mse = errs.iter().sum::<f64>() / r;
            let var = errs.iter().map(|e| (e - mse).powi(2)).sum::<f64>() / (r - 1.0);
            MsePoint {
                n,
                mse,
                stderr: (var / r).sqrt(),
            }
        })
        .collect();
    let fit = fit_rate(&points);
    Ok(MseCurve { points, fit })
}

/// Type-1 empirical quantile: the order statistic at 1-based rank `ceil(level n)`.
pub fn empirical_quantile(values: &mut [f64], level: f64) -> Result<f64> {
    check_level(level)?;
    if values.is_empty() {
        return Err(Error::InsufficientData("quantile of an empty sample".into()));
    }
    let rank = ((level * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let (_, q, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*q)
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1), got {level}")))
    }
}

/// `|q_N - q|` at each grid `N`, where `q_N` is the quantile of the first
/// coordinate over the stored samples with time below `N`.
pub fn quantile_error_trace<F: Real>(
    output: &ChainOutput<F>,
    level: f64,
    true_quantile: f64,
    grid: &[u64],
) -> Result<Vec<(u64, f64)>> {
    check_level(level)?;
    if output.stride.is_none() {
        return Err(Error::InsufficientData("run stored no samples".into()));
    }
    let xs: Vec<f64> = output.first_coordinate().iter().map(|x| x.as_f64()).collect();
    let stride = output.stride.unwrap_or(1);
    let mut buf = Vec::with_capacity(xs.len());
    grid.iter()
        .map(|&n| {
            let m = (n.div_ceil(stride) as usize).min(xs.len());
            buf.clear();
            buf.extend_from_slice(&xs[..m]);
            let q = empirical_quantile(&mut buf, level)?;
            Ok((n, (q - true_quantile).abs()))
        })
        .collect()
}

fn check_spd<F: Real>(m: &DMatrix<F>, name: &str) -> Result<nalgebra::Cholesky<F, nalgebra::Dyn>> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::NotSpd(format!("{name} is not a nonempty square matrix")));
    }
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.as_f64().abs()));
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).as_f64().abs() > 1e-8 * scale {
                return Err(Error::NotSpd(format!("{name} is not symmetric at ({i}, {j})")));
            }
        }
    }
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::NotSpd(format!("{name} is not positive definite")))
}

/// `b = d sum(1/l) / (sum l^{-1/2})^2` over the eigenvalues `l` of
/// `sigma_true^{-1} sigma_est`. Equals 1 exactly when the two are proportional.
pub fn inhomogeneity_factor<F: Real>(sigma_true: &DMatrix<F>, sigma_est: &DMatrix<F>) -> Result<f64> {
    let chol = check_spd(sigma_true, "sigma_true")?;
    check_spd(sigma_est, "sigma_est")?;
    if sigma_true.shape() != sigma_est.shape() {
        return Err(Error::DimensionMismatch {
            expected: sigma_true.nrows(),
            got: sigma_est.nrows(),
        });
    }
    // L^{-1} S L^{-T} has the same eigenvalues as Sigma^{-1} S
    let l = chol.l();
    let a = l
        .solve_lower_triangular(sigma_est)
        .expect("nonsingular factor");
    let a = l
        .solve_lower_triangular(&a.transpose())
        .expect("nonsingular factor");
    let a = (&a + a.transpose()) * F::of(0.5);
    let eig = a.symmetric_eigenvalues();
    let d = eig.len() as f64;
    let mut inv = 0.0;
    let mut inv_sqrt = 0.0;
    for l in eig.iter() {
        let l = l.as_f64();
        if !(l > 0.0) {
            return Err(Error::NotSpd("sigma_est is not positive definite".into()));
        }
        inv += 1.0 / l;
        inv_sqrt += 1.0 / l.sqrt();
    }
    Ok(d * inv / (inv_sqrt * inv_sqrt))
}

/// `(N_j, b)` for every adaptation time whose committed covariance is
/// recorded and positive definite; early singular estimates are skipped.
pub fn inhomogeneity_trace<F: Real>(
    output: &ChainOutput<F>,
    sigma_true: &DMatrix<F>,
) -> Result<Vec<(u64, f64)>> {
    use crate::kernels::KernelParam;
    check_spd(sigma_true, "sigma_true")?;
    let mut trace = Vec::new();
    for rec in &output.adaptation_trace {
        if let Some(KernelParam::Covariance { sigma: Some(s), .. }) = &rec.param {
            match inhomogeneity_factor(sigma_true, s) {
                Ok(b) => trace.push((rec.time, b)),
                Err(Error::NotSpd(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(trace)
}

/// Batch-means estimate of the asymptotic variance of the average of `xs`.
/// Trailing values that do not fill a batch are dropped.
pub fn batch_means_series(xs: &[f64], batch_count: usize) -> Result<f64> {
    if batch_count < 2 {
        return Err(Error::InvalidArgument("batch_count must be >= 2".into()));
    }
    if xs.len() < 2 * batch_count {
        return Err(Error::InsufficientData(format!(
            "{} values for {batch_count} batches",
            xs.len()
        )));
    }
    let len = xs.len() / batch_count;
    let sums: Vec<f64> = xs.chunks_exact(len).take(batch_count).map(|c| c.iter().sum()).collect();
    batch_means_from_sums(&sums, len as u64)
}

/// Batch-means estimate from per-batch sums of equal length `len`.
pub fn batch_means_from_sums(sums: &[f64], len: u64) -> Result<f64> {
    if sums.len() < 2 || len == 0 {
        return Err(Error::InsufficientData("need at least two nonempty batches".into()));
    }
    let l = len as f64;
    let means: Vec<f64> = sums.iter().map(|s| s / l).collect();
    let b = means.len() as f64;
    let m = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1.0);
    Ok(var * l)
}

/// Batch means of `f` along the unthinned stored samples of a run.
pub fn batch_means_sigma2<F: Real>(
    output: &ChainOutput<F>,
    f: &TestFunction<F>,
    batch_count: usize,
) -> Result<f64> {
    if output.stride != Some(1) {
        return Err(Error::InsufficientData("batch means need every sample stored".into()));
    }
    let xs: Vec<f64> = (0..output.sample_count())
        .map(|i| f.eval(output.sample(i)).as_f64())
        .collect();
    batch_means_series(&xs, batch_count)
}

/// Lyapunov drift condition on a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSpec<S: Exact> {
    /// `P V <= lambda V + b 1_C`.
    Geometric {
        v: Vec<S>,
        lambda: S,
        b: S,
        small_set: Vec<usize>,
    },
    /// `P V <= V - c V^alpha + b 1_C`.
    Polynomial {
        v: Vec<S>,
        c: S,
        alpha: f64,
        b: S,
        small_set: Vec<usize>,
    },
}

impl<S: Exact> DriftSpec<S> {
    pub fn v(&self) -> &[S] {
        match self {
            DriftSpec::Geometric { v, .. } | DriftSpec::Polynomial { v, .. } => v,
        }
    }

    pub fn small_set(&self) -> &[usize] {
        match self {
            DriftSpec::Geometric { small_set, .. } | DriftSpec::Polynomial { small_set, .. } => {
                small_set
            }
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let v = self.v();
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        if v.iter().any(|x| *x < S::one()) {
            return Err(Error::InvalidParameter("V must be >= 1 everywhere".into()));
        }
        if self.small_set().iter().any(|&x| x >= n) {
            return Err(Error::InvalidParameter("small set state out of range".into()));
        }
        match self {
            DriftSpec::Geometric { lambda, b, .. } => {
                if !(*lambda > S::zero() && *lambda < S::one()) {
                    return Err(Error::InvalidParameter("lambda must lie in (0, 1)".into()));
                }
                if *b < S::zero() {
                    return Err(Error::InvalidParameter("b must be >= 0".into()));
                }
            }
            DriftSpec::Polynomial { c, alpha, b, .. } => {
                if !(*c > S::zero()) || !(*alpha > 0.0 && *alpha < 1.0) || *b < S::zero() {
                    return Err(Error::InvalidParameter(
                        "polynomial drift needs c > 0, alpha in (0, 1), b >= 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Right-hand side of the condition at state `x`.
    fn bound(&self, x: usize) -> S {
        let in_c = self.small_set().contains(&x);
        match self {
            DriftSpec::Geometric { v, lambda, b, .. } => {
                let r = lambda.clone() * v[x].clone();
                if in_c {
                    r + b.clone()
                } else {
                    r
                }
            }
            DriftSpec::Polynomial { v, c, alpha, b, .. } => {
                let pow = S::from_f64_lossy(v[x].to_f64_lossy().powf(*alpha));
                let r = v[x].clone() - c.clone() * pow;
                if in_c {
                    r + b.clone()
                } else {
                    r
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftMargin<S: Exact> {
    pub kernel: usize,
    pub state: usize,
    /// `(P V)(x)`.
    pub pv: S,
    pub bound: S,
    /// `bound - pv`.
    pub slack: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport<S: Exact> {
    /// True when every slack exceeds `1e-12`.
    pub holds: bool,
    pub worst_slack: S,
    pub margins: Vec<DriftMargin<S>>,
}

/// Minimum slack required for a drift or minorization check to pass.
pub const PASS_SLACK: f64 = 1e-12;

/// Checks the drift condition for every kernel and every state.
pub fn verify_drift<S: Exact>(
    kernels: &[StochasticMatrix<S>],
    spec: &DriftSpec<S>,
) -> Result<DriftReport<S>> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty kernel family".into()))?;
    let n = first.size();
    if kernels.iter().any(|k| k.size() != n) {
        return Err(Error::InvalidArgument("kernel sizes differ".into()));
    }
    spec.validate(n)?;
    let mut margins = Vec::with_capacity(kernels.len() * n);
    for (k, p) in kernels.iter().enumerate() {
        let pv = p.apply(spec.v());
        for (x, pv) in pv.into_iter().enumerate() {
            let bound = spec.bound(x);
            let slack = bound.clone() - pv.clone();
            margins.push(DriftMargin { kernel: k, state: x, pv, bound, slack });
        }
    }
    let worst_slack = margins
        .iter()
        .map(|m| m.slack.clone())
        .reduce(|a, b| S::min_of(&a, &b))
        .expect("nonempty");
    Ok(DriftReport {
        holds: worst_slack.to_f64_lossy() > PASS_SLACK,
        worst_slack,
        margins,
    })
}

/// The two transition matrices (widths 1 and 2) of the four-state example.
pub fn counterexample_kernels<S: Exact>(eps: S) -> Result<Vec<StochasticMatrix<S>>> {
    let target = four_state_target(eps)?;
    Ok(vec![
        finite_transition_matrix(1, &target)?,
        finite_transition_matrix(2, &target)?,
    ])
}

/// Drift certificate of the four-state example: `V = (1, 8, 1, 8)`,
/// `lambda = 7/8`, `C = {0, 2}` and `b = 8`, which bounds `P V` on `C`.
pub fn counterexample_drift<S: Exact>() -> DriftSpec<S> {
    let one = S::one();
    let eight = S::from_ratio(8, 1);
    DriftSpec::Geometric {
        v: vec![one.clone(), eight.clone(), one, eight.clone()],
        lambda: S::from_ratio(7, 8),
        b: eight,
        small_set: vec![0, 2],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvPoint {
    pub time: u64,
    /// Index of the stretch the point lies in; 0 before the first decision.
    pub k: u32,
    /// `||L(X_t) - pi||_TV`.
    pub tv: f64,
    /// Sum over widths of the distance of each width's sub-law to its mass
    /// times `pi`; bounds `tv` and cannot increase within a stretch.
    pub component_tv: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactProbe {
    pub k: u32,
    pub time: u64,
    /// `P(X_time = 0)`.
    pub prob: f64,
    /// `prob - pi(0)`.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvTrace {
    pub eps: f64,
    pub points: Vec<TvPoint>,
    pub probes: Vec<ExactProbe>,
    /// Joint law of `(width, state)` at the end of the trace.
    pub final_law: [[f64; 4]; 2],
}

impl TvTrace {
    /// Smallest probe excess over stretches `k_min..=k_max`.
    pub fn min_excess(&self, k_min: u32, k_max: u32) -> Option<f64> {
        self.probes
            .iter()
            .filter(|p| p.k >= k_min && p.k <= k_max)
            .map(|p| p.excess)
            .reduce(f64::min)
    }
}

type Law = [[f64; 4]; 2];

/// Exact law of the four-state adaptive chain that changes width only at
/// times `2^{k^2}`, tracked on the lifted space (width, state).
///
/// Points are recorded at each decision, at the probe time `2^{k^2} + 2`,
/// at doubling offsets within the stretch and at its end.
pub fn counterexample_tv_trace(eps: f64, max_k: u32) -> Result<TvTrace> {
    if max_k > 6 {
        let needed = 1u128.checked_shl((max_k + 1) * (max_k + 1)).unwrap_or(u128::MAX);
        return Err(Error::BudgetExceeded {
            needed,
            budget: 1 << 49,
        });
    }
    let target = four_state_target(eps)?;
    let pi = target.to_f64();
    let kernels = counterexample_kernels(eps)?;
    let mut law: Law = [[0.0; 4]; 2];
    law[0][0] = 1.0;
    let mut time = 2u64;
    let mut points = vec![tv_point(&law, &pi, time, 0)];
    let mut probes = Vec::new();

    for k in 1..=max_k {
        law = decision_step(&law, &kernels);
        time += 1;
        points.push(tv_point(&law, &pi, time, k));
        let end = 1u64 << ((k + 1) * (k + 1));
        let mut offset = 0u64;
        let mut next = 1u64;
        while time < end {
            let target_time = (time - offset + next).min(end);
            let jump = target_time - time;
            for (g, row) in law.iter_mut().enumerate() {
                *row = advance(row, &kernels[g], jump);
            }
            offset += jump;
            time = target_time;
            let p = tv_point(&law, &pi, time, k);
            if offset == 1 {
                let prob = law[0][0] + law[1][0];
                probes.push(ExactProbe { k, time, prob, excess: prob - pi[0] });
            }
            points.push(p);
            next = offset * 2;
        }
    }
    Ok(TvTrace {
        eps,
        points,
        probes,
        final_law: law,
    })
}

/// One step from the decision time, moving mass between widths according
/// to the outcome of that step.
fn decision_step(law: &Law, kernels: &[StochasticMatrix<f64>]) -> Law {
    let mut out: Law = [[0.0; 4]; 2];
    for g in 0..2 {
        for x in 0..4 {
            let m = law[g][x];
            if m == 0.0 {
                continue;
            }
            for y in 0..4 {
                let p = kernels[g][(x, y)];
                if p == 0.0 {
                    continue;
                }
                // proposals never stay put, so a move happened iff y != x
                let next = counterexample_update(g as u8 + 1, y != x, y);
                out[next as usize - 1][y] += m * p;
            }
        }
    }
    out
}

fn advance(row: &[f64; 4], kernel: &StochasticMatrix<f64>, steps: u64) -> [f64; 4] {
    let moved = kernel.pow(steps).left_mul(row);
    [moved[0], moved[1], moved[2], moved[3]]
}

fn tv_point(law: &Law, pi: &[f64], time: u64, k: u32) -> TvPoint {
    let marginal: Vec<f64> = (0..4).map(|y| law[0][y] + law[1][y]).collect();
    let component_tv = law
        .iter()
        .map(|row| {
            let mass: f64 = row.iter().sum();
            let scaled: Vec<f64> = pi.iter().map(|p| p * mass).collect();
            0.5 * row.iter().zip(&scaled).map(|(a, b)| (a - b).abs()).sum::<f64>()
        })
        .sum();
    TvPoint {
        time,
        k,
        tv: total_variation(&marginal, pi),
        component_tv,
        mass: marginal.iter().sum(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegenerationStats {
    pub tours: u64,
    pub mean: f64,
    pub stderr: f64,
    /// `1 / (delta pi(C))`.
    pub analytic: f64,
    /// `(mean - analytic) / stderr`.
    pub z: f64,
    /// How often each state started a tour.
    pub start_counts: Vec<u64>,
    /// Chi-square goodness of fit of the tour starts against `nu`.
    pub start_p_value: f64,
}

/// Simulates `tours` tours of the split chain, each started from `nu` and
/// ended at the next regeneration, and compares the mean length with
/// `1 / (delta pi(C))`.
pub fn regeneration_stats<R: Rng + ?Sized>(
    cert: &MinorizationCert<f64>,
    kernel: &StochasticMatrix<f64>,
    target: &FiniteTarget<f64>,
    tours: u64,
    rng: &mut R,
) -> Result<RegenerationStats> {
    if tours == 0 {
        return Err(Error::InvalidArgument("need at least one tour".into()));
    }
    if target.len() != kernel.size() {
        return Err(Error::DimensionMismatch {
            expected: kernel.size(),
            got: target.len(),
        });
    }
    let split = SplitChain::new(kernel, cert)?;
    let n = kernel.size();
    let mut counts = vec![0u64; n];
    let mut x = crate::kernels::sample_discrete(split.nu(), rng);
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..tours {
        counts[x] += 1;
        let mut len = 0u64;
        loop {
            let (next, regenerated) = split.step(x, rng);
            len += 1;
            x = next;
            if regenerated {
                break;
            }
        }
        let l = len as f64;
        sum += l;
        sum_sq += l * l;
    }
    let r = tours as f64;
    let mean = sum / r;
    let var = if tours > 1 { (sum_sq - r * mean * mean) / (r - 1.0) } else { 0.0 };
    let stderr = (var.max(0.0) / r).sqrt();
    let analytic = 1.0 / (cert.delta * target.mass(&cert.small_set));
    let z = if stderr > 0.0 {
        (mean - analytic) / stderr
    } else if mean == analytic {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(RegenerationStats {
        tours,
        mean,
        stderr,
        analytic,
        z,
        start_p_value: chi_square_p(&counts, &cert.nu),
        start_counts: counts,
    })
}

/// Upper tail p-value of Pearson's statistic over the support of `probs`.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let support: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    if counts.iter().enumerate().any(|(i, &c)| c > 0 && probs[i] == 0.0) {
        return 0.0;
    }
    if support.len() < 2 {
        return 1.0;
    }
    let stat: f64 = support
        .iter()
        .map(|&i| {
            let e = probs[i] * total as f64;
            (counts[i] as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((support.len() - 1) as f64).expect("positive dof");
    1.0 - dist.cdf(stat)
}
