//! Asynchronous primal-dual (APD) runs over the event engine, the
//! barrier-synchronized baseline, step-size rules and their condition checker.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{error_metric, saddle_oracle, AnalysisError, SaddlePoint, DEFAULT_SADDLE_TOLERANCE};
use crate::engine::{build_schedule, BufferInit, DelayModel, EngineError, Simulator, SystemState};
use crate::model::{ModelError, ProblemSpec};
use crate::oracle::{dual_gradient, sample_vector, stoch_grad_loss, stream_seed, SampleStream};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid step size: {0}")]
    InvalidStepSize(String),
    #[error("checkpoint stride must be positive")]
    ZeroStride,
    #[error("a halted worker blocks every synchronous round")]
    Stalled,
    #[error("delay model has {delay} workers, problem has {problem}")]
    WorkerCount { delay: usize, problem: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `γ_k` for `k ≥ 1`; indices `k ≤ 0` evaluate as `γ_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSizeRule {
    Constant(f64),
    /// `γ_k = a₀ / (a₁ + k)`.
    Inverse { a0: f64, a1: f64 },
}

impl StepSizeRule {
    pub fn gamma(&self, k: i64) -> f64 {
        let k = k.max(1) as f64;
        match *self {
            StepSizeRule::Constant(g) => g,
            StepSizeRule::Inverse { a0, a1 } => a0 / (a1 + k),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        match *self {
            StepSizeRule::Constant(g) if !(g > 0.0 && g.is_finite()) => Err(
                SolverError::InvalidStepSize(format!("constant step must be finite and > 0, got {g}")),
            ),
            StepSizeRule::Inverse { a0, a1 } if !(a0 > 0.0 && a0.is_finite() && a1.is_finite() && a1 > -1.0) => {
                Err(SolverError::InvalidStepSize(format!(
                    "inverse rule needs a0 > 0 and a1 > -1, got a0 = {a0}, a1 = {a1}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for StepSizeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSizeRule::Constant(g) => write!(f, "constant({g})"),
            StepSizeRule::Inverse { a0, a1 } => write!(f, "{a0}/({a1}+k)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Apd,
    SyncPd,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Apd => "apd",
            Algorithm::SyncPd => "sync",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "apd" => Some(Algorithm::Apd),
            "sync" => Some(Algorithm::SyncPd),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: u64,
    pub tick: u64,
    pub delta: f64,
    pub lambda: Vec<f64>,
    /// `g(θ̄)` at the true average.
    pub constraint: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
}

/// First counter value and tick with `Δ ≤ threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdHit {
    pub threshold: f64,
    pub k: Option<u64>,
    pub tick: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Set by the experiment harness; empty for direct runs.
    pub config_hash: String,
    pub records: Vec<TraceRecord>,
    pub hits: Vec<ThresholdHit>,
}

impl RunTrace {
    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds the initial state")
    }

    pub fn hit(&self, threshold: f64) -> Option<&ThresholdHit> {
        self.hits.iter().find(|h| h.threshold == threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initialization {
    /// Independent uniform draws in each box, seeded from the run seed.
    Uniform,
    Fixed(Vec<Vec<f64>>),
}

pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.0, 0.1, 0.01];

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub checkpoint_stride: u64,
    pub init: Initialization,
    pub buffer_init: BufferInit,
    pub thresholds: Vec<f64>,
    pub saddle_tolerance: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            checkpoint_stride: 1,
            init: Initialization::Uniform,
            buffer_init: BufferInit::Zero,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            saddle_tolerance: DEFAULT_SADDLE_TOLERANCE,
        }
    }
}

/// `θ⁰` for a run.
pub fn initial_decisions(spec: &ProblemSpec, seed: u64, init: &Initialization) -> Vec<Vec<f64>> {
    match init {
        Initialization::Fixed(theta) => theta.clone(),
        Initialization::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX));
            spec.boxes()
                .iter()
                .map(|b| {
                    b.lower()
                        .iter()
                        .zip(b.upper())
                        .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                        .collect()
                })
                .collect()
        }
    }
}

struct Recorder<'a> {
    spec: &'a ProblemSpec,
    saddle: SaddlePoint,
    stride: u64,
    records: Vec<TraceRecord>,
    hits: Vec<ThresholdHit>,
}

impl<'a> Recorder<'a> {
    fn new(spec: &'a ProblemSpec, opts: &RunOptions) -> Result<Self, SolverError> {
        if opts.checkpoint_stride == 0 {
            return Err(SolverError::ZeroStride);
        }
        Ok(Self {
            spec,
            saddle: saddle_oracle(spec, opts.saddle_tolerance)?,
            stride: opts.checkpoint_stride,
            records: Vec::new(),
            hits: opts
                .thresholds
                .iter()
                .map(|&threshold| ThresholdHit {
                    threshold,
                    k: None,
                    tick: None,
                })
                .collect(),
        })
    }

    /// Called after each update with the counter before (`prev_k`) and after.
    fn observe(&mut self, prev_k: u64, k: u64, tick: u64, theta: &[Vec<f64>], lambda: &[f64], force: bool) {
        let delta = error_metric(theta, lambda, &self.saddle);
        for h in &mut self.hits {
            if h.k.is_none() && delta <= h.threshold {
                h.k = Some(k);
                h.tick = Some(tick);
            }
        }
        let crossed = k == 0 || k / self.stride > prev_k / self.stride;
        if crossed || force {
            self.records.push(TraceRecord {
                k,
                tick,
                delta,
                lambda: lambda.to_vec(),
                constraint: self.spec.constraint_value(&self.spec.average(theta)),
                theta: theta.to_vec(),
            });
        }
    }

    fn finish(self, algorithm: Algorithm, seed: u64) -> RunTrace {
        RunTrace {
            algorithm,
            seed,
            config_hash: String::new(),
            records: self.records,
            hits: self.hits,
        }
    }
}

/// APD over the event engine for exactly `horizon` counted iterations.
pub fn run_apd(
    spec: &ProblemSpec,
    delay: &DelayModel,
    rule: &StepSizeRule,
    seed: u64,
    horizon: u64,
    opts: &RunOptions,
) -> Result<RunTrace, SolverError> {
    rule.validate()?;
    if delay.n() != spec.n() {
        return Err(SolverError::WorkerCount {
            delay: delay.n(),
            problem: spec.n(),
        });
    }
    let mut rec = Recorder::new(spec, opts)?;
    let state = SystemState::with_buffer(spec, initial_decisions(spec, seed, &opts.init), opts.buffer_init)?;
    rec.observe(0, 0, 0, &state.theta, &state.lambda, true);
    if horizon == 0 {
        return Ok(rec.finish(Algorithm::Apd, seed));
    }
    let schedule = build_schedule(delay, horizon)?;
    let streams = SampleStream::for_spec(spec, seed);
    let mut sim = Simulator::new(spec.clone(), schedule, *rule, streams, state)?;
    let mut prev_k = 0;
    while let Some(event) = sim.step()? {
        if !event.kind.is_counted() {
            continue;
        }
        let s = sim.state();
        rec.observe(prev_k, s.k, s.clock, &s.theta, &s.lambda, s.k == horizon);
        prev_k = s.k;
    }
    Ok(rec.finish(Algorithm::Apd, seed))
}

/// Barrier-synchronized primal-dual rounds on the same tick clock.
///
/// In a round every worker updates with the same payload `s(J g(b̄))λ` and
/// step `γ_{k+1}` (`k += n`), then the server stores the fresh models, forms
/// the next payload from the pre-update `λ`, and takes one projected dual
/// step with `γ_{k+1}` (`k += 1`). A round costs `max_i v_i + τ_up + τ_bc`
/// ticks. The run stops at the first phase boundary with `k ≥ horizon`.
pub fn run_sync_pd(
    spec: &ProblemSpec,
    delay: &DelayModel,
    rule: &StepSizeRule,
    seed: u64,
    horizon: u64,
    opts: &RunOptions,
) -> Result<RunTrace, SolverError> {
    rule.validate()?;
    if delay.n() != spec.n() {
        return Err(SolverError::WorkerCount {
            delay: delay.n(),
            problem: spec.n(),
        });
    }
    let slowest = delay
        .compute_ticks
        .iter()
        .map(|v| v.ok_or(SolverError::Stalled))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .max()
        .unwrap_or(0);
    let round = slowest + delay.upload_delay + delay.broadcast_delay;
    let mut rec = Recorder::new(spec, opts)?;
    let mut state = SystemState::initial(spec, initial_decisions(spec, seed, &opts.init))?;
    let mut streams = SampleStream::for_spec(spec, seed);
    rec.observe(0, 0, 0, &state.theta, &state.lambda, true);
    let n = spec.n() as u64;
    let mut start = 0u64;
    let mut payload = vec![0.0; spec.d()];
    while state.k < horizon {
        let gamma = rule.gamma(state.k as i64 + 1);
        for (i, stream) in streams.iter_mut().enumerate() {
            let z = sample_vector(stream, spec.d());
            let grad = stoch_grad_loss(&state.theta[i], &z);
            let theta = &mut state.theta[i];
            for ((t, g), p) in theta.iter_mut().zip(&grad).zip(&payload) {
                *t -= gamma * (g + p);
            }
            spec.boxes()[i].project_in_place(theta);
        }
        let prev = state.k;
        state.k += n;
        state.clock = start + slowest;
        rec.observe(prev, state.k, state.clock, &state.theta, &state.lambda, state.k >= horizon);
        if state.k >= horizon {
            break;
        }

        state.buffer.clone_from(&state.theta);
        payload = spec.dual_correction(&spec.average(&state.buffer), &state.lambda);
        let gamma = rule.gamma(state.k as i64 + 1);
        let grad = dual_gradient(spec, &state.buffer, &state.lambda);
        state.lambda.iter_mut().zip(&grad).for_each(|(l, g)| *l += gamma * g);
        spec.project_dual_in_place(&mut state.lambda);
        let prev = state.k;
        state.k += 1;
        state.clock = start + slowest + delay.upload_delay;
        rec.observe(prev, state.k, state.clock, &state.theta, &state.lambda, state.k >= horizon);
        start += round;
    }
    Ok(rec.finish(Algorithm::SyncPd, seed))
}

/// First `k` at which `γ_k > 2/(pμ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupViolation {
    pub k: u64,
    pub gamma: f64,
}

/// First `(k, ℓ)` with `γ_{k−(ℓ+1)B+2} / γ_{k−ℓB+2} > 1 + (pμ/2) γ_{k−ℓB+2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioViolation {
    pub k: u64,
    pub ell: u64,
    /// `k − ℓB + 2`.
    pub index: i64,
    pub ratio: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeReport {
    pub sup_gamma: f64,
    pub sup_limit: f64,
    pub sup_violation: Option<SupViolation>,
    pub ratio_violation: Option<RatioViolation>,
}

impl StepSizeReport {
    pub fn passed(&self) -> bool {
        self.sup_violation.is_none() && self.ratio_violation.is_none()
    }

    /// Smallest violating `k` over both conditions.
    pub fn first_violation(&self) -> Option<u64> {
        let a = self.sup_violation.map(|v| v.k);
        let b = self.ratio_violation.map(|v| v.k);
        match (a, b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        }
    }
}

/// Checks `sup γ_k ≤ 2/(pμ)` and the window ratio condition for every
/// `k ≤ horizon` and every window index `ℓ ∈ 1..=⌊(k+1)/B⌋`.
///
/// Each ratio term depends on `j = k − ℓB + 2` only, and the reachable `j`
/// are `1..=horizon−B+2`; the earliest `k` reaching `j` is `j + B − 2` at `ℓ = 1`.
pub fn check_stepsize_conditions(rule: &StepSizeRule, p: u64, window: u64, mu: f64, horizon: u64) -> StepSizeReport {
    let pmu = p as f64 * mu;
    let sup_limit = 2.0 / pmu;
    let mut sup_gamma = f64::NEG_INFINITY;
    let mut sup_violation = None;
    for k in 1..=horizon.max(1) {
        let g = rule.gamma(k as i64);
        sup_gamma = sup_gamma.max(g);
        if g > sup_limit && sup_violation.is_none() {
            sup_violation = Some(SupViolation { k, gamma: g });
        }
    }
    let b = window as i64;
    let last = horizon as i64 - b + 2;
    let ratio_violation = (1..=last).find_map(|j| {
        let gj = rule.gamma(j);
        let ratio = rule.gamma(j - b) / gj;
        let limit = 1.0 + 0.5 * pmu * gj;
        (ratio > limit).then(|| RatioViolation {
            k: (j + b - 2).max(1) as u64,
            ell: 1,
            index: j,
            ratio,
            limit,
        })
    });
    StepSizeReport {
        sup_gamma,
        sup_limit,
        sup_violation,
        ratio_violation,
    }
}
