//! The epoch driver.
//!
//! Each epoch runs `n_k` steps of a kernel whose parameter is frozen; the
//! background adaptation state is updated every step and its current value is
//! committed at the end of the epoch if the gate allows it.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::adapt::{counterexample_update, gate_allows, AdaptGate, AdaptRule, AdaptState};
use crate::error::{Error, Result};
use crate::kernels::{
    am_mixture_step, rwm_step, AmProposal, ChainState, FiniteMh, KernelParam, StepOutcome,
};
use crate::rng::{replicate_rng, ChainRng};
use crate::scalar::Real;
use crate::schedule::LagSchedule;
use crate::targets::{four_state_target, FiniteTarget, TargetDensity, TargetKind, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// Random-walk Metropolis with an isotropic Gaussian proposal.
    Rwm,
    /// Adaptive Metropolis two-component mixture.
    AmMixture,
    /// Nearest-neighbour Metropolis-Hastings on a finite target.
    FiniteMh,
    /// Independent draws from the target; the control for error-rate fits.
    Direct,
}

#[derive(Debug, Clone)]
pub struct RunSpec<F: Real> {
    pub target: Arc<TargetDensity<F>>,
    pub family: KernelFamily,
    pub rule: AdaptRule,
    pub gate: AdaptGate<F>,
    pub schedule: LagSchedule,
    pub iterations: u64,
    pub initial_state: Vec<F>,
    pub initial_param: KernelParam<F>,
    pub seed: u64,
    /// Store every `stride`-th state; `None` keeps no samples.
    pub thinning: Option<u64>,
    pub functions: Vec<TestFunction<F>>,
    /// Iteration counts at which running sums are snapshotted.
    pub checkpoints: Vec<u64>,
    /// Keep the full committed parameter in the adaptation trace, not only its summary.
    pub record_params: bool,
}

impl<F: Real> RunSpec<F> {
    /// Spec with every optional field at its default.
    pub fn new(
        target: Arc<TargetDensity<F>>,
        family: KernelFamily,
        rule: AdaptRule,
        schedule: LagSchedule,
        initial_param: KernelParam<F>,
        iterations: u64,
        seed: u64,
    ) -> Self {
        let dim = target.dim();
        Self {
            target,
            family,
            rule,
            gate: AdaptGate::Always,
            schedule,
            iterations,
            initial_state: vec![F::zero(); dim],
            initial_param,
            seed,
            thinning: None,
            functions: Vec::new(),
            checkpoints: Vec::new(),
            record_params: true,
        }
    }

    /// Checks the (target, kernel, rule) combination before any sampling.
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if self.thinning == Some(0) {
            return Err(Error::InvalidArgument("thinning stride must be >= 1".into()));
        }
        if self.initial_state.len() != self.target.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.target.dim(),
                got: self.initial_state.len(),
            });
        }
        self.initial_param.validate()?;
        let finite = matches!(self.target.kind(), TargetKind::Finite { .. });
        let ok = match (self.family, &self.rule, &self.initial_param) {
            (KernelFamily::Rwm, AdaptRule::None | AdaptRule::Scaling { .. }, KernelParam::Scalar { .. }) => !finite,
            (KernelFamily::Rwm, AdaptRule::None | AdaptRule::AccTarget { .. }, KernelParam::AccTarget { .. }) => !finite,
            (KernelFamily::AmMixture, AdaptRule::None | AdaptRule::CovEstimate { .. }, KernelParam::Covariance { .. }) => !finite,
            (KernelFamily::FiniteMh, AdaptRule::None, KernelParam::FiniteIdx { .. }) => finite,
            (KernelFamily::Direct, AdaptRule::None, KernelParam::Direct) => matches!(
                self.target.kind(),
                TargetKind::StudentT { .. } | TargetKind::GaussianCov { .. }
            ),
            _ => false,
        };
        if !ok {
            return Err(Error::Incompatible(format!(
                "family {:?} with rule {:?} and parameter {:?} on a {} target",
                self.family,
                self.rule,
                self.initial_param,
                target_name(self.target.kind())
            )));
        }
        if let AdaptRule::Scaling { s, .. } = self.rule {
            if !(s > 0.0) {
                return Err(Error::InvalidParameter(format!("gain exponent s = {s}")));
            }
        }
        if let AdaptGate::Coin(c) = &self.gate {
            c.validate()?;
        }
        Ok(())
    }
}

fn target_name<F: Real>(kind: &TargetKind<F>) -> &'static str {
    match kind {
        TargetKind::StudentT { .. } => "student_t",
        TargetKind::PolyTail { .. } => "poly_tail",
        TargetKind::GaussianCov { .. } => "gaussian_cov",
        TargetKind::Finite { .. } => "finite",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationRecord<F: Real> {
    /// Adaptation time `N_j`.
    pub time: u64,
    pub epoch: u64,
    /// Whether the gate let the adapted value through.
    pub allowed: bool,
    /// Number of commits so far; 0 means the initial parameter is in force.
    pub version: u64,
    pub summary: f64,
    /// The parameter in force after this adaptation time, when recorded.
    pub param: Option<KernelParam<F>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput<F: Real> {
    pub seed: u64,
    pub replicate: u64,
    pub iterations: u64,
    pub dim: usize,
    /// Flattened states `X_0, X_s, X_2s, ..` below `iterations`, `s` the stride.
    pub samples: Vec<F>,
    pub stride: Option<u64>,
    pub final_state: Vec<F>,
    pub adaptation_trace: Vec<AdaptationRecord<F>>,
    pub epoch_acceptance: Vec<F>,
    pub gate_events: Vec<bool>,
    pub wall_time: f64,
    pub function_names: Vec<String>,
    /// `sum_{i < iterations} f(X_i)` per registered function.
    pub function_sums: Vec<F>,
    /// `(N, sums over X_0..X_{N-1})` at each requested checkpoint.
    pub checkpoint_sums: Vec<(u64, Vec<F>)>,
    pub accepted: u64,
    pub degeneracy_events: u64,
    pub final_param: KernelParam<F>,
}

impl<F: Real> ChainOutput<F> {
    pub fn sample_count(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.samples.len() / self.dim
        }
    }

    pub fn sample(&self, i: usize) -> &[F] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Iteration index of stored sample `i`.
    pub fn sample_time(&self, i: usize) -> u64 {
        i as u64 * self.stride.unwrap_or(1)
    }

    /// First coordinate of every stored sample.
    pub fn first_coordinate(&self) -> Vec<F> {
        self.samples.iter().step_by(self.dim.max(1)).copied().collect()
    }

    pub fn adaptations(&self) -> usize {
        self.adaptation_trace.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.iterations as f64
    }
}

/// Event passed to the instrumentation hook after every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEvent {
    pub iteration: u64,
    pub epoch: u64,
    /// Version of the committed parameter the step read.
    pub version: u64,
}

enum Engine<F: Real> {
    Rwm { variance: F },
    Am(AmProposal<F>),
    Finite { kernel: FiniteMh, gamma: u8 },
    Direct,
}

impl<F: Real> Engine<F> {
    fn build(spec: &RunSpec<F>) -> Result<Self> {
        let mut e = match spec.family {
            KernelFamily::Rwm => Engine::Rwm { variance: F::one() },
            KernelFamily::AmMixture => Engine::Am(AmProposal::local_only(spec.target.dim())),
            KernelFamily::FiniteMh => {
                let TargetKind::Finite { probs } = spec.target.kind() else {
                    return Err(Error::Incompatible("finite kernel needs a finite target".into()));
                };
                let probs: Vec<f64> = probs.iter().map(|p| p.as_f64()).collect();
                Engine::Finite {
                    kernel: FiniteMh::new(&FiniteTarget::new(probs)?),
                    gamma: 1,
                }
            }
            KernelFamily::Direct => Engine::Direct,
        };
        e.commit(&spec.initial_param, spec.target.dim());
        Ok(e)
    }

    /// Installs a committed parameter. Returns true on a degeneracy event.
    fn commit(&mut self, param: &KernelParam<F>, dim: usize) -> bool {
        match (self, param) {
            (Engine::Rwm { variance }, KernelParam::Scalar { gamma })
            | (Engine::Rwm { variance }, KernelParam::AccTarget { nu: gamma }) => {
                *variance = *gamma;
                false
            }
            (Engine::Am(p), KernelParam::Covariance { sigma, n_seen }) => {
                let (next, degenerate) = AmProposal::from_estimate(dim, sigma.as_ref(), *n_seen);
                *p = next;
                degenerate
            }
            (Engine::Finite { gamma, .. }, KernelParam::FiniteIdx { gamma: g }) => {
                *gamma = *g;
                false
            }
            _ => false,
        }
    }

    #[inline]
    fn step<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState<F>,
        target: &TargetDensity<F>,
        rng: &mut R,
    ) -> Result<StepOutcome<F>> {
        match self {
            Engine::Rwm { variance } => rwm_step(state, *variance, target, rng),
            Engine::Am(p) => am_mixture_step(state, p, target, rng),
            Engine::Finite { kernel, gamma } => {
                let x = state.point[0].as_f64() as usize;
                let s = kernel.step(x, *gamma, rng);
                if s.accepted {
                    state.point[0] = F::of(s.new_state as f64);
                    state.log_density = target.log_density(&state.point);
                }
                Ok(StepOutcome {
                    accepted: s.accepted,
                    acc_prob: F::of(s.acc_prob),
                })
            }
            Engine::Direct => {
                target.sample_exact(rng, &mut state.point);
                state.log_density = target.log_density(&state.point);
                Ok(StepOutcome {
                    accepted: true,
                    acc_prob: F::one(),
                })
            }
        }
    }
}

/// Runs replicate 0 of `spec`.
pub fn run_air<F: Real>(spec: &RunSpec<F>) -> Result<ChainOutput<F>> {
    run_replicate(spec, 0, |_| {})
}

/// Runs replicate 0 and reports every step to `hook`.
pub fn run_air_with_hook<F: Real>(
    spec: &RunSpec<F>,
    hook: impl FnMut(StepEvent),
) -> Result<ChainOutput<F>> {
    run_replicate(spec, 0, hook)
}

/// Runs one replicate on its own random stream.
pub fn run_replicate<F: Real>(
    spec: &RunSpec<F>,
    replicate: u64,
    mut hook: impl FnMut(StepEvent),
) -> Result<ChainOutput<F>> {
    spec.validate()?;
    let started = Instant::now();
    let mut rng = replicate_rng(spec.seed, replicate);
    let target = spec.target.as_ref();
    let dim = target.dim();
    let mut state = ChainState::new(target, spec.initial_state.clone())?;
    let mut schedule = spec.schedule.clone();
    let mut adapt = AdaptState::new(&spec.rule, &spec.initial_param, dim)?;
    let mut engine = Engine::build(spec)?;
    let mut committed = spec.initial_param.clone();

    let n_fun = spec.functions.len();
    let mut sums = vec![F::zero(); n_fun];
    let mut checkpoints: Vec<u64> = spec
        .checkpoints
        .iter()
        .copied()
        .filter(|&c| c >= 1 && c <= spec.iterations)
        .collect();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut next_checkpoint = 0usize;
    let mut checkpoint_sums = Vec::with_capacity(checkpoints.len());

    let mut samples = Vec::new();
    if let Some(stride) = spec.thinning {
        samples.reserve(((spec.iterations / stride + 1) as usize) * dim);
    }

    let mut trace = Vec::new();
    let mut epoch_acceptance = Vec::new();
    let mut gate_events = Vec::new();
    let mut accepted = 0u64;
    let mut degeneracy = 0u64;
    let mut version = 0u64;
    let mut iteration = 0u64;
    let mut epoch = 0u64;

    while iteration < spec.iterations {
        epoch += 1;
        let lag = schedule.next_lag(Some(&mut rng))?;
        let mut steps = 0u64;
        let mut acc_sum = F::zero();
        while steps < lag && iteration < spec.iterations {
            for (s, f) in sums.iter_mut().zip(&spec.functions) {
                *s += f.eval(&state.point);
            }
            if let Some(stride) = spec.thinning {
                if iteration % stride == 0 {
                    samples.extend_from_slice(&state.point);
                }
            }
            let outcome = engine
                .step(&mut state, target, &mut rng)
                .map_err(|e| match e {
                    Error::NumericOverflow { .. } => Error::NumericOverflow {
                        iteration: iteration + 1,
                    },
                    other => other,
                })?;
            iteration += 1;
            steps += 1;
            accepted += u64::from(outcome.accepted);
            acc_sum += outcome.acc_prob;
            adapt.observe(&state.point, &outcome, iteration)?;
            hook(StepEvent {
                iteration,
                epoch,
                version,
            });
            if next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == iteration {
                checkpoint_sums.push((iteration, sums.clone()));
                next_checkpoint += 1;
            }
        }
        epoch_acceptance.push(acc_sum / F::of(steps as f64));
        if steps < lag {
            break;
        }
        adapt.end_epoch(epoch, lag);
        let allowed = gate_allows(
            &spec.gate,
            &state.point,
            state.log_density,
            trace.len() as u64 + 1,
            &mut rng,
        );
        gate_events.push(allowed);
        if allowed {
            committed = adapt.current();
            if !committed.is_finite() {
                return Err(Error::NumericOverflow { iteration });
            }
            degeneracy += u64::from(engine.commit(&committed, dim));
            version += 1;
        }
        trace.push(AdaptationRecord {
            time: iteration,
            epoch,
            allowed,
            version,
            summary: committed.summary(),
            param: spec.record_params.then(|| committed.clone()),
        });
    }

    Ok(ChainOutput {
        seed: spec.seed,
        replicate,
        iterations: spec.iterations,
        dim,
        samples,
        stride: spec.thinning,
        final_state: state.point,
        adaptation_trace: trace,
        epoch_acceptance,
        gate_events,
        wall_time: started.elapsed().as_secs_f64(),
        function_names: spec.functions.iter().map(|f| f.name.clone()).collect(),
        function_sums: sums,
        checkpoint_sums,
        accepted,
        degeneracy_events: degeneracy,
        final_param: committed,
    })
}

#[derive(Debug)]
pub struct Replications<F: Real> {
    /// Successful outputs in replicate order.
    pub outputs: Vec<ChainOutput<F>>,
    pub failures: Vec<(u64, Error)>,
}

/// Runs `count` independent replicates, `threads` at a time (0 = all cores).
pub fn run_replications<F: Real>(
    spec: &RunSpec<F>,
    count: u64,
    threads: usize,
) -> Result<Replications<F>> {
    if count == 0 {
        return Err(Error::InvalidArgument("replication count must be >= 1".into()));
    }
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let results: Vec<(u64, Result<ChainOutput<F>>)> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|r| (r, run_replicate(spec, r, |_| {})))
            .collect()
    });
    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(o) => outputs.push(o),
            Err(e) => failures.push((r, e)),
        }
    }
    Ok(Replications { outputs, failures })
}

/// A state of the counterexample chain at a probe time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    pub k: u32,
    pub time: u64,
    pub state: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleRun {
    pub eps: f64,
    pub seed: u64,
    pub replicate: u64,
    /// Last time index reached; states `X_0..=X_T` were visited.
    pub final_time: u64,
    pub truncated: bool,
    /// Visits to each state over `X_0..=X_T`.
    pub visits: [u64; 4],
    /// States at times `2^{k^2} + 2`.
    pub probes: Vec<Probe>,
    /// `(time of the decision step, width before, width after)`.
    pub decisions: Vec<(u64, u8, u8)>,
    /// Visits to state 0 in equal consecutive blocks, for batch-means errors.
    pub block_hits: Vec<u64>,
    pub block_len: u64,
}

impl CounterexampleRun {
    pub fn ergodic_average(&self, state: usize) -> f64 {
        self.visits[state] as f64 / (self.final_time + 1) as f64
    }
}

/// `2^{k^2}` or `None` past `u64`.
pub fn decision_time(k: u32) -> Option<u64> {
    let e = k.checked_mul(k)?;
    1u64.checked_shl(e).filter(|_| e < 64)
}

/// Runs the four-state adaptive chain that adapts once at each time `2^{k^2}`.
///
/// Starts from `X_0 = X_1 = X_2 = 0` with width 1. For `k = 1..=max_k` one
/// decision step is taken from `X_{2^{k^2}}` with the current width, the width
/// is updated from that step, and the chain then runs with the new width up
/// to time `2^{(k+1)^2}`. The run stops early, flagged as truncated, once
/// `budget` steps have been taken.
pub fn run_counterexample(
    eps: f64,
    max_k: u32,
    seed: u64,
    replicate: u64,
    budget: u64,
) -> Result<CounterexampleRun> {
    let target = four_state_target(eps)?;
    let kernel = FiniteMh::new(&target);
    let mut rng: ChainRng = replicate_rng(seed, replicate);
    let horizon = match decision_time(max_k + 1) {
        Some(t) if t <= budget => t,
        _ => budget.max(2),
    };
    let truncated = decision_time(max_k + 1).is_none_or(|t| t > budget);
    let blocks = 100u64;
    let block_len = (horizon + 1).div_ceil(blocks);
    let mut block_hits = vec![0u64; blocks as usize];

    let mut visits = [0u64; 4];
    let mut x = 0usize;
    let mut gamma = 1u8;
    let mut time = 0u64;
    let mut record = |t: u64, s: usize, visits: &mut [u64; 4]| {
        visits[s] += 1;
        if s == 0 {
            block_hits[(t / block_len) as usize] += 1;
        }
    };
    for t in 0..=2 {
        record(t, 0, &mut visits);
    }
    time = time.max(2);
    let mut probes = Vec::new();
    let mut decisions = Vec::new();

    'outer: for k in 1..=max_k {
        let start = decision_time(k).expect("bounded by horizon");
        debug_assert_eq!(start, time);
        if time >= horizon {
            break;
        }
        let step = kernel.step(x, gamma, &mut rng);
        time += 1;
        x = step.new_state;
        record(time, x, &mut visits);
        let next = counterexample_update(gamma, step.accepted, x);
        decisions.push((start, gamma, next));
        gamma = next;
        let end = decision_time(k + 1).map_or(horizon, |t| t.min(horizon));
        while time < end {
            x = kernel.step(x, gamma, &mut rng).new_state;
            time += 1;
            record(time, x, &mut visits);
            if time == start + 2 {
                probes.push(Probe { k, time, state: x });
            }
        }
        if time >= horizon {
            break 'outer;
        }
    }

    Ok(CounterexampleRun {
        eps,
        seed,
        replicate,
        final_time: time,
        truncated,
        visits,
        probes,
        decisions,
        block_hits,
        block_len,
    })
}
