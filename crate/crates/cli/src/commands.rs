//! The subcommands behind the `airmcmc` binary.

use std::path::PathBuf;
use std::time::Instant;

use airmcmc_core::diagnostics::{
    counterexample_drift, counterexample_kernels, counterexample_tv_trace, ergodic_average,
    geometric_grid, inhomogeneity_trace, mse_curve, quantile_error_trace, regeneration_stats,
    verify_drift, MseCurve, PASS_SLACK,
};
use airmcmc_core::kernels::compute_minorization;
use airmcmc_core::rng::replicate_rng;
use airmcmc_core::runner::{run_replicate, run_replications, ChainOutput};
use airmcmc_core::targets::four_state_target;
use airmcmc_core::{Exact, Rational};

use crate::config::{sha256_hex, ConfigError, ExperimentConfig, Issue, LoadedConfig};
use crate::output::{num, CsvOut, OutputError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{0}")]
    Runtime(String),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Output(_) | CliError::Runtime(_) => 1,
            CliError::Verify(_) => 3,
        }
    }
}

impl From<Issue> for CliError {
    fn from(i: Issue) -> Self {
        CliError::Config(ConfigError::Invalid(vec![i]))
    }
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Overrides shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub quiet: bool,
}

impl Context {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn dir(&self, cfg: Option<&ExperimentConfig>) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn apply(&self, loaded: &LoadedConfig) -> ExperimentConfig {
        let mut cfg = loaded.config.clone();
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(t) = self.threads {
            cfg.run.threads = t;
        }
        cfg
    }
}

/// Paths of the files a command wrote.
#[derive(Debug, Clone, Default)]
pub struct Written {
    pub files: Vec<PathBuf>,
}

struct Files<'a> {
    dir: PathBuf,
    prefix: &'a str,
    hash: &'a str,
    seed: u64,
    written: Written,
}

impl Files<'_> {
    fn create(&self, suffix: &str, header: &[&str]) -> Result<CsvOut, OutputError> {
        let path = self.dir.join(format!("{}_{suffix}.csv", self.prefix));
        CsvOut::create(&path, self.hash, self.seed, header)
    }

    fn done(&mut self, out: CsvOut) -> Result<(), OutputError> {
        self.written.files.push(out.finish()?);
        Ok(())
    }
}

fn report_failures(failures: &[(u64, airmcmc_core::Error)]) -> Result<(), CliError> {
    if failures.is_empty() {
        return Ok(());
    }
    for (r, e) in failures {
        eprintln!("replicate {r} failed: {e}");
    }
    Err(CliError::Runtime(format!("{} replicate(s) failed", failures.len())))
}

/// Index of the parameter version in force at each stored sample.
fn versions_at(out: &ChainOutput<f64>) -> Vec<u64> {
    let mut v = Vec::with_capacity(out.sample_count());
    let mut j = 0;
    let mut version = 0;
    for i in 0..out.sample_count() {
        let t = out.sample_time(i);
        while j < out.adaptation_trace.len() && out.adaptation_trace[j].time <= t {
            version = out.adaptation_trace[j].version;
            j += 1;
        }
        v.push(version);
    }
    v
}

/// Runs the configured chain, writing trace, adaptation, per-replicate and,
/// where the target allows it, quantile and inhomogeneity tables.
pub fn run(loaded: &LoadedConfig, ctx: &Context) -> Result<Written, CliError> {
    let cfg = ctx.apply(loaded);
    let mut files = Files {
        dir: ctx.dir(Some(&cfg)),
        prefix: cfg.prefix(&loaded.name),
        hash: &loaded.hash,
        seed: cfg.run.seed,
        written: Written::default(),
    };
    let mut bulk = cfg.spec()?;
    bulk.record_params = false;
    let reps = run_replications(&bulk, cfg.run.replications, cfg.run.threads).map_err(runtime)?;

    // replicate 0 again with samples and full parameters; the stream is the same
    let mut first = bulk.clone();
    first.thinning = Some(cfg.output.trace_stride);
    first.record_params = true;
    let lead = run_replicate(&first, 0, |_| {}).map_err(runtime)?;
    let f = cfg.test_function()?;

    if cfg.output.trace {
        let mut header = vec!["iter".to_string()];
        header.extend((0..lead.dim).map(|i| format!("x{i}")));
        header.push("gamma_snapshot".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut out = files.create("trace", &header)?;
        for (i, v) in versions_at(&lead).into_iter().enumerate() {
            let mut row = vec![lead.sample_time(i).to_string()];
            row.extend(lead.sample(i).iter().map(|x| num(*x)));
            row.push(v.to_string());
            out.row(row)?;
        }
        files.done(out)?;
    }

    let mut out = files.create("adapt", &["time", "epoch", "version", "allowed", "summary"])?;
    for a in &lead.adaptation_trace {
        out.row([
            a.time.to_string(),
            a.epoch.to_string(),
            a.version.to_string(),
            u8::from(a.allowed).to_string(),
            num(a.summary),
        ])?;
    }
    files.done(out)?;

    let mut out = files.create(
        "replicates",
        &["replicate", "final_param", "adaptations", "acceptance_rate", "average"],
    )?;
    for o in &reps.outputs {
        let avg = ergodic_average(o, &f).map_err(runtime)?;
        out.row([
            o.replicate.to_string(),
            num(o.final_param.summary()),
            o.adaptations().to_string(),
            num(o.acceptance_rate()),
            num(avg),
        ])?;
    }
    files.done(out)?;

    let grid = geometric_grid(
        cfg.diagnostics.grid_min,
        cfg.run.iterations,
        cfg.diagnostics.grid_per_decade,
    );
    if let Some(q) = cfg.true_quantile() {
        let trace = quantile_error_trace(&lead, cfg.diagnostics.quantile_level, q, &grid)
            .map_err(runtime)?;
        let mut out = files.create("quantile", &["N", "abs_error"])?;
        for (n, e) in trace {
            out.row([n.to_string(), num(e)])?;
        }
        files.done(out)?;
    }
    if let (Some(sigma), Some(_)) = (
        bulk.target.covariance(),
        lead.adaptation_trace.first().and_then(|a| a.param.as_ref()),
    ) {
        if matches!(lead.final_param, airmcmc_core::kernels::KernelParam::Covariance { .. }) {
            let trace = inhomogeneity_trace(&lead, sigma).map_err(runtime)?;
            let mut out = files.create("inhom", &["N", "b"])?;
            for (n, b) in trace {
                out.row([n.to_string(), num(b)])?;
            }
            files.done(out)?;
        }
    }

    let n = reps.outputs.len().max(1) as f64;
    let mean_param = reps.outputs.iter().map(|o| o.final_param.summary()).sum::<f64>() / n;
    let mean_adapt = reps.outputs.iter().map(|o| o.adaptations() as f64).sum::<f64>() / n;
    let mean_acc = reps.outputs.iter().map(|o| o.acceptance_rate()).sum::<f64>() / n;
    ctx.say(format!(
        "{} replicate(s) x {} iterations: mean final parameter {mean_param:.4}, \
         mean adaptations {mean_adapt:.1}, mean acceptance {mean_acc:.3}",
        reps.outputs.len(),
        cfg.run.iterations
    ));
    for p in &files.written.files {
        ctx.say(format!("wrote {}", p.display()));
    }
    report_failures(&reps.failures)?;
    Ok(files.written)
}

/// Computes the MSE curve of the configured test function over replications.
pub fn mse_study(loaded: &LoadedConfig, ctx: &Context) -> Result<(Written, MseCurve), CliError> {
    let cfg = ctx.apply(loaded);
    let mut files = Files {
        dir: ctx.dir(Some(&cfg)),
        prefix: cfg.prefix(&loaded.name),
        hash: &loaded.hash,
        seed: cfg.run.seed,
        written: Written::default(),
    };
    if cfg.run.replications < 50 {
        return Err(Issue {
            path: "run.replications".into(),
            message: "an MSE study needs at least 50 replications".into(),
        }
        .into());
    }
    let f = cfg.test_function()?;
    let truth = f.true_value.ok_or_else(|| Issue {
        path: "diagnostics.true_value".into(),
        message: "no analytic value for this target and function; set it".into(),
    })?;
    let grid = geometric_grid(
        cfg.diagnostics.grid_min,
        cfg.run.iterations,
        cfg.diagnostics.grid_per_decade,
    );
    let mut spec = cfg.spec()?;
    spec.record_params = false;
    spec.checkpoints = grid.clone();
    let reps = run_replications(&spec, cfg.run.replications, cfg.run.threads).map_err(runtime)?;
    report_failures(&reps.failures)?;
    let curve = mse_curve(&reps.outputs, &f, truth, &grid).map_err(runtime)?;

    let mut out = files.create("mse", &["N", "mse", "stderr"])?;
    for p in &curve.points {
        out.row([p.n.to_string(), num(p.mse), num(p.stderr)])?;
    }
    files.done(out)?;

    match &curve.fit {
        Some(fit) => ctx.say(format!(
            "fitted slope {:.4} (intercept {:.4}, R^2 {:.4}) over {} points",
            fit.slope,
            fit.intercept,
            fit.r_squared,
            fit.grid.len()
        )),
        None => ctx.say("too few grid points for a rate fit"),
    }
    for p in &files.written.files {
        ctx.say(format!("wrote {}", p.display()));
    }
    if let Some([lo, hi]) = cfg.diagnostics.expected_slope {
        let slope = curve.fit.as_ref().map(|f| f.slope);
        match slope {
            Some(s) if (lo..=hi).contains(&s) => {}
            _ => {
                return Err(CliError::Verify(format!(
                    "slope {slope:?} outside [{lo}, {hi}]"
                )))
            }
        }
    }
    Ok((files.written, curve))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub variant: String,
    pub samples: u64,
    pub seconds: f64,
    pub adaptations: usize,
}

/// Times each schedule variant on the same target, kernel and seed.
pub fn benchmark(loaded: &LoadedConfig, ctx: &Context) -> Result<(Written, Vec<BenchRow>), CliError> {
    let cfg = ctx.apply(loaded);
    let bench = cfg.benchmark.clone().ok_or_else(|| Issue {
        path: "benchmark".into(),
        message: "the benchmark command needs a [benchmark] section".into(),
    })?;
    let mut files = Files {
        dir: ctx.dir(Some(&cfg)),
        prefix: cfg.prefix(&loaded.name),
        hash: &loaded.hash,
        seed: cfg.run.seed,
        written: Written::default(),
    };
    let mut rows = Vec::new();
    for v in &bench.variants {
        let mut spec = cfg.spec_with(Some(&v.schedule))?;
        spec.record_params = false;
        spec.functions.clear();
        spec.validate().map_err(runtime)?;
        let start = Instant::now();
        let mut adaptations = 0;
        for r in 0..bench.repeats {
            let out = run_replicate(&spec, r, |_| {}).map_err(runtime)?;
            if r == 0 {
                adaptations = out.adaptations();
            }
        }
        let seconds = start.elapsed().as_secs_f64();
        ctx.say(format!(
            "{:<16} {:>10} samples {:>9.3} s {:>7} adaptations",
            v.name,
            cfg.run.iterations * bench.repeats,
            seconds,
            adaptations
        ));
        rows.push(BenchRow {
            variant: v.name.clone(),
            samples: cfg.run.iterations * bench.repeats,
            seconds,
            adaptations,
        });
    }
    let mut out = files.create("bench", &["variant", "samples", "seconds"])?;
    for r in &rows {
        out.row([r.variant.clone(), r.samples.to_string(), num(r.seconds)])?;
    }
    files.done(out)?;
    Ok((files.written, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Drift,
    Minorization,
    Counterexample,
    Regeneration,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Drift => "drift",
            Check::Minorization => "minorization",
            Check::Counterexample => "counterexample",
            Check::Regeneration => "regeneration",
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyArgs {
    pub check: Check,
    /// Exact decimal or `p/q` fraction.
    pub eps: String,
    pub max_k: u32,
    pub tours: u64,
    /// Width of the kernel simulated by the regeneration check.
    pub width: u8,
    /// Minimum probe excess the counterexample check requires.
    pub threshold: f64,
}

impl Default for VerifyArgs {
    fn default() -> Self {
        Self {
            check: Check::Drift,
            eps: "1/10".into(),
            max_k: 5,
            tours: 100_000,
            width: 2,
            threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub check: String,
    pub margin: f64,
    pub pass: bool,
}

/// Parses `0.05`, `1/20` or `5e-2` style input into an exact rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().ok()?;
        let q: i64 = q.trim().parse().ok()?;
        return (q != 0).then(|| Rational::from_ratio(p, q));
    }
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if frac.chars().any(|c| !c.is_ascii_digit()) || (int.is_empty() && frac.is_empty()) {
        return None;
    }
    let digits: i64 = format!("{int}{frac}").parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = Rational::from_ratio(10, 1);
    let mut r = Rational::from_ratio(digits, 1);
    for _ in 0..scale.unsigned_abs() {
        r = if scale > 0 { r * ten.clone() } else { r / ten.clone() };
    }
    Some(r)
}

/// Runs one finite-state check and writes `verify_<check>.csv`.
pub fn verify(args: &VerifyArgs, ctx: &Context) -> Result<(Written, Vec<VerifyRow>), CliError> {
    let seed = ctx.seed.unwrap_or(0);
    let eps = parse_rational(&args.eps).ok_or_else(|| Issue {
        path: "--eps".into(),
        message: format!("cannot parse `{}` as a number", args.eps),
    })?;
    let eps_f = eps.to_f64_lossy();
    four_state_target(eps.clone()).map_err(|e| Issue {
        path: "--eps".into(),
        message: e.to_string(),
    })?;
    let canonical = format!(
        "verify {} eps={eps} max_k={} tours={} width={} threshold={} seed={seed}",
        args.check.name(),
        args.max_k,
        args.tours,
        args.width,
        args.threshold
    );
    let hash = sha256_hex(canonical.as_bytes());
    let mut files = Files {
        dir: ctx.dir(None),
        prefix: "verify",
        hash: &hash,
        seed,
        written: Written::default(),
    };
    let kernels = counterexample_kernels(eps.clone()).map_err(runtime)?;
    let mut rows = Vec::new();
    let mut push = |check: String, margin: f64, pass: bool| rows.push(VerifyRow { check, margin, pass });

    match args.check {
        Check::Drift => {
            let drift = counterexample_drift::<Rational>();
            let report = verify_drift(&kernels, &drift).map_err(runtime)?;
            for m in &report.margins {
                ctx.say(format!(
                    "P{} V({}) = {} <= {} (slack {})",
                    m.kernel + 1,
                    m.state,
                    m.pv,
                    m.bound,
                    m.slack
                ));
                let slack = m.slack.to_f64_lossy();
                push(format!("P{}V[{}]", m.kernel + 1, m.state), slack, slack > PASS_SLACK);
            }
            let p2v3 = &report
                .margins
                .iter()
                .find(|m| m.kernel == 1 && m.state == 3)
                .expect("two kernels on four states")
                .pv;
            let expected = Rational::from_ratio(25, 4);
            let diff = (p2v3.clone() - expected).to_f64_lossy();
            push("P2V[3]=25/4".into(), if diff == 0.0 { 0.0 } else { -diff.abs() }, diff == 0.0);
            ctx.say(format!("worst slack {}", report.worst_slack));
            push("drift".into(), report.worst_slack.to_f64_lossy(), report.holds);
        }
        Check::Minorization => {
            let cert = compute_minorization(&kernels, &[0, 2]).map_err(runtime)?;
            match cert {
                Some(c) => {
                    let nu: Vec<String> = c.nu.iter().map(|v| v.to_string()).collect();
                    ctx.say(format!(
                        "C = {{0, 2}}: delta = {}, nu = ({})",
                        c.delta,
                        nu.join(", ")
                    ));
                    let delta = c.delta.to_f64_lossy();
                    push("delta".into(), delta, delta > PASS_SLACK);
                    let holds = c.holds_for(&kernels);
                    push("certificate".into(), if holds { 0.0 } else { -1.0 }, holds);
                }
                None => {
                    ctx.say("C = {0, 2} is not small for the family");
                    push("delta".into(), 0.0, false);
                }
            }
        }
        Check::Counterexample => {
            let trace = counterexample_tv_trace(eps_f, args.max_k).map_err(runtime)?;
            let mut tv = files.create("counterexample_tv", &["time", "k", "tv", "component_tv"])?;
            for p in &trace.points {
                tv.row([p.time.to_string(), p.k.to_string(), num(p.tv), num(p.component_tv)])?;
            }
            files.done(tv)?;
            for p in &trace.probes {
                ctx.say(format!(
                    "k = {}: P(X at 2^(k^2)+2 = 0) = {:.6}, excess over pi(0) {:.6}",
                    p.k, p.prob, p.excess
                ));
                push(format!("probe_k{}", p.k), p.excess, p.excess > args.threshold);
            }
            let k_hi = args.max_k.clamp(2, 5);
            let min = trace.min_excess(2, k_hi).unwrap_or(f64::NAN);
            push(format!("min_excess_k2_{k_hi}"), min, min > args.threshold);
        }
        Check::Regeneration => {
            let kf = counterexample_kernels(eps_f).map_err(runtime)?;
            let cert = compute_minorization(&kernels, &[0, 2])
                .map_err(runtime)?
                .ok_or_else(|| runtime("no minorization on {0, 2}"))?
                .to_f64();
            let idx = match args.width {
                1 | 2 => usize::from(args.width - 1),
                w => {
                    return Err(Issue {
                        path: "--width".into(),
                        message: format!("must be 1 or 2, got {w}"),
                    }
                    .into())
                }
            };
            let target = four_state_target(eps_f).map_err(runtime)?;
            let mut rng = replicate_rng(seed, 0);
            let stats = regeneration_stats(&cert, &kf[idx], &target, args.tours, &mut rng)
                .map_err(runtime)?;
            ctx.say(format!(
                "{} tours: mean length {:.4} +- {:.4}, analytic {:.4}, z = {:.3}, start law p = {:.3}",
                stats.tours, stats.mean, stats.stderr, stats.analytic, stats.z, stats.start_p_value
            ));
            push("mean_tour_length".into(), 3.0 - stats.z.abs(), stats.z.abs() < 3.0);
            push(
                "start_law".into(),
                stats.start_p_value - 0.01,
                stats.start_p_value > 0.01,
            );
        }
    }

    let mut out = files.create(args.check.name(), &["check", "margin", "pass"])?;
    for r in &rows {
        out.row([r.check.clone(), num(r.margin), r.pass.to_string()])?;
    }
    files.done(out)?;
    for r in &rows {
        ctx.say(format!(
            "{} {} (margin {})",
            if r.pass { "PASS" } else { "FAIL" },
            r.check,
            r.margin
        ));
    }
    if rows.iter().all(|r| r.pass) {
        Ok((files.written, rows))
    } else {
        let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.check.as_str()).collect();
        Err(CliError::Verify(failed.join(", ")))
    }
}
