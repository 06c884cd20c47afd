//! Deterministic discrete-event model of asynchronous workers and a server.
//!
//! Time is an integer tick clock. Worker `i` finishes an update every `v_i`
//! ticks; the model reaches the server `τ_up` ticks later; the server's reply
//! reaches every inbox `τ_bc` ticks after that. The server computes in zero
//! ticks. The iteration counter `k` advances once per worker finish and once
//! per server receipt; broadcast deliveries do not count.
//!
//! Events at the same tick are ordered server-receive, then broadcast-deliver,
//! then worker-finish by ascending worker index. Events spawned with zero
//! delay join the current tick under the same order.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::model::{ModelError, ProblemSpec};
use crate::oracle::{delayed_primal_gradient, dual_gradient, sample_vector, DelayedDualTerm, Sampler};
use crate::solvers::StepSizeRule;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("horizon must be at least one iteration")]
    ZeroHorizon,
    #[error("invalid delay model: {0}")]
    InvalidDelay(String),
    #[error("event references worker {worker} but the problem has {n} workers")]
    UnknownWorker { worker: usize, n: usize },
    #[error("event {event} references a message that was never sent")]
    DanglingMessage { event: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Worker durations and link delays, in ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayModel {
    /// Ticks per update; `None` marks a worker that never finishes.
    pub compute_ticks: Vec<Option<u64>>,
    pub upload_delay: u64,
    pub broadcast_delay: u64,
}

impl DelayModel {
    pub fn new(compute_ticks: Vec<u64>, upload_delay: u64, broadcast_delay: u64) -> Result<Self, EngineError> {
        Self::with_halted(
            compute_ticks.into_iter().map(Some).collect(),
            upload_delay,
            broadcast_delay,
        )
    }

    pub fn with_halted(
        compute_ticks: Vec<Option<u64>>,
        upload_delay: u64,
        broadcast_delay: u64,
    ) -> Result<Self, EngineError> {
        if compute_ticks.is_empty() {
            return Err(EngineError::InvalidDelay("no workers".into()));
        }
        if let Some(i) = compute_ticks.iter().position(|v| *v == Some(0)) {
            return Err(EngineError::InvalidDelay(format!(
                "worker {i} has a zero-tick update"
            )));
        }
        if compute_ticks.iter().all(Option::is_none) {
            return Err(EngineError::InvalidDelay("every worker is halted".into()));
        }
        Ok(Self {
            compute_ticks,
            upload_delay,
            broadcast_delay,
        })
    }

    /// Every worker takes one tick, links are instantaneous.
    pub fn zero_delay(n: usize) -> Self {
        Self::new(vec![1; n], 0, 0).expect("n > 0")
    }

    pub fn n(&self) -> usize {
        self.compute_ticks.len()
    }

    /// Ticks of one barrier round: slowest worker plus both link delays.
    pub fn round_ticks(&self) -> Option<u64> {
        let slowest = self.compute_ticks.iter().map(|v| v.unwrap_or(u64::MAX)).max()?;
        if slowest == u64::MAX {
            return None;
        }
        Some(slowest + self.upload_delay + self.broadcast_delay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    WorkerFinish { worker: usize },
    /// `upload` is the index of the finish event that produced the model.
    ServerReceive { worker: usize, upload: usize },
    /// `broadcast` is the index of the receive event that issued the payload.
    BroadcastDeliver { worker: usize, broadcast: usize },
}

impl EventKind {
    pub fn worker(&self) -> usize {
        match *self {
            EventKind::WorkerFinish { worker }
            | EventKind::ServerReceive { worker, .. }
            | EventKind::BroadcastDeliver { worker, .. } => worker,
        }
    }

    pub fn is_counted(&self) -> bool {
        !matches!(self, EventKind::BroadcastDeliver { .. })
    }

    fn rank(&self) -> u8 {
        match self {
            EventKind::ServerReceive { .. } => 0,
            EventKind::BroadcastDeliver { .. } => 1,
            EventKind::WorkerFinish { .. } => 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EventKind::WorkerFinish { .. } => "worker-finish",
            EventKind::ServerReceive { .. } => "server-receive",
            EventKind::BroadcastDeliver { .. } => "broadcast-deliver",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub tick: u64,
    /// Counter value after the event.
    pub k: u64,
    pub kind: EventKind,
    /// Worker finish: age of the inbox payload. Server receive: largest age of
    /// a buffer slot after the write. Deliveries: `None`.
    pub staleness: Option<u64>,
}

/// A precomputed event timeline with derived staleness.
#[derive(Debug, Clone)]
pub struct Schedule {
    delay: DelayModel,
    horizon: u64,
    events: Vec<Event>,
}

/// Builds the timeline up to the `horizon`-th counted event.
pub fn build_schedule(delay: &DelayModel, horizon: u64) -> Result<Schedule, EngineError> {
    if horizon == 0 {
        return Err(EngineError::ZeroHorizon);
    }
    let n = delay.n();
    let mut heap: BinaryHeap<Reverse<(u64, u8, u64, EventKind)>> = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<_>, tick: u64, seq: u64, kind: EventKind| {
        heap.push(Reverse((tick, kind.rank(), seq, kind)));
    };
    for (i, v) in delay.compute_ticks.iter().enumerate() {
        if let Some(v) = v {
            push(&mut heap, *v, i as u64, EventKind::WorkerFinish { worker: i });
        }
    }
    let mut seq = n as u64;
    let mut counted = 0u64;
    let mut events = Vec::new();
    while counted < horizon {
        let Reverse((tick, _, _, kind)) = heap.pop().expect("an active worker keeps the queue non-empty");
        let idx = events.len();
        match kind {
            EventKind::WorkerFinish { worker } => {
                counted += 1;
                let v = delay.compute_ticks[worker].expect("only active workers finish");
                push(&mut heap, tick + v, worker as u64, kind);
                push(
                    &mut heap,
                    tick + delay.upload_delay,
                    seq,
                    EventKind::ServerReceive { worker, upload: idx },
                );
                seq += 1;
            }
            EventKind::ServerReceive { .. } => {
                counted += 1;
                for j in 0..n {
                    push(
                        &mut heap,
                        tick + delay.broadcast_delay,
                        seq,
                        EventKind::BroadcastDeliver {
                            worker: j,
                            broadcast: idx,
                        },
                    );
                    seq += 1;
                }
            }
            EventKind::BroadcastDeliver { .. } => {}
        }
        events.push(Event {
            tick,
            k: counted,
            kind,
            staleness: None,
        });
    }
    annotate_staleness(n, &mut events);
    Ok(Schedule {
        delay: delay.clone(),
        horizon,
        events,
    })
}

/// Effective staleness: the age of the newest iterate a stale quantity still
/// equals. A buffer slot holding `θ_j` from finish index `f` equals `θ_j^t`
/// for `t` up to the index before `j`'s next finish; the initial slot counts
/// as `θ_j^0`. A payload formed from `λ^v` equals only `λ^v`. The zero initial
/// payload equals `λ^t` until the first receipt.
fn annotate_staleness(n: usize, events: &mut [Event]) {
    let mut finishes: Vec<Vec<u64>> = vec![Vec::new(); n];
    for e in events.iter() {
        if let EventKind::WorkerFinish { worker } = e.kind {
            finishes[worker].push(e.k);
        }
    }
    let next_finish = |j: usize, after: u64| -> Option<u64> {
        let list = &finishes[j];
        let pos = list.partition_point(|&k| k <= after);
        list.get(pos).copied()
    };
    let mut inbox: Vec<Option<u64>> = vec![None; n];
    let mut slots: Vec<u64> = vec![0; n];
    let mut versions: HashMap<usize, u64> = HashMap::new();
    let mut first_receipt: Option<u64> = None;
    for idx in 0..events.len() {
        let e = events[idx];
        let before = e.k.saturating_sub(1);
        match e.kind {
            EventKind::WorkerFinish { worker } => {
                let age = match inbox[worker] {
                    Some(v) => before - v,
                    None => first_receipt.map_or(0, |kr| before - (kr - 1)),
                };
                events[idx].staleness = Some(age);
            }
            EventKind::ServerReceive { worker, upload } => {
                if first_receipt.is_none() {
                    first_receipt = Some(e.k);
                }
                slots[worker] = events[upload].k;
                let age = (0..n)
                    .map(|j| match next_finish(j, slots[j]) {
                        Some(u) if u <= before => before - (u - 1),
                        _ => 0,
                    })
                    .max()
                    .unwrap_or(0);
                events[idx].staleness = Some(age);
                versions.insert(idx, before);
            }
            EventKind::BroadcastDeliver { worker, broadcast } => {
                inbox[worker] = versions.get(&broadcast).copied();
            }
        }
    }
}

impl Schedule {
    pub fn delay(&self) -> &DelayModel {
        &self.delay
    }

    pub fn n(&self) -> usize {
        self.delay.n()
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn counted(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind.is_counted())
    }

    /// Tab-separated `tick, k, kind, worker, staleness`; `-` where undefined.
    pub fn write_event_log<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "tick\tk\tkind\tworker\tstaleness")?;
        for e in &self.events {
            let staleness = e.staleness.map_or_else(|| "-".to_string(), |s| s.to_string());
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e.tick,
                e.k,
                e.kind.label(),
                e.kind.worker(),
                staleness
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Entity {
    Worker(usize),
    Server,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Worker(i) => write!(f, "worker {i}"),
            Entity::Server => f.write_str("server"),
        }
    }
}

/// Every window of `b` consecutive iterations holds `p` activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivationWindow {
    pub p: u64,
    pub b: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Never activated within the horizon.
    Stalled(Entity),
    /// `τ̄ > B`.
    StalenessExceedsWindow { staleness: u64, window: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Stalled(e) => write!(f, "{e} is never activated"),
            Violation::StalenessExceedsWindow { staleness, window } => {
                write!(f, "staleness {staleness} exceeds window length {window}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssumptionReport {
    /// `τ̄ = max(buffer, broadcast)`.
    pub max_staleness: u64,
    pub buffer_staleness: u64,
    pub broadcast_staleness: u64,
    /// Smallest `B` such that every entity activates in every `B`-window, with
    /// `p` the fewest activations any entity has in any such window.
    pub window: Option<ActivationWindow>,
    /// Smallest `B` with identical counts `p` for every entity in every window.
    pub strict_window: Option<ActivationWindow>,
    pub violations: Vec<Violation>,
}

impl AssumptionReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Largest `B` tried for the strict window.
pub const STRICT_WINDOW_SEARCH: u64 = 1024;

/// Activation indices (counter values) per entity: workers, then the server.
pub fn activations(schedule: &Schedule) -> Vec<Vec<u64>> {
    let n = schedule.n();
    let mut acts = vec![Vec::new(); n + 1];
    for e in schedule.counted() {
        match e.kind {
            EventKind::WorkerFinish { worker } => acts[worker].push(e.k),
            EventKind::ServerReceive { .. } => acts[n].push(e.k),
            EventKind::BroadcastDeliver { .. } => {}
        }
    }
    acts
}

fn prefix_counts(acts: &[u64], horizon: u64) -> Vec<u32> {
    let mut prefix = vec![0u32; horizon as usize + 1];
    for &a in acts {
        prefix[a as usize] += 1;
    }
    for t in 1..prefix.len() {
        prefix[t] += prefix[t - 1];
    }
    prefix
}

fn window_counts(b: u64, horizon: u64, prefix: &[u32]) -> impl Iterator<Item = u32> + '_ {
    (b as usize..=horizon as usize).map(move |end| prefix[end] - prefix[end - b as usize])
}

pub fn validate_assumptions(schedule: &Schedule) -> AssumptionReport {
    let n = schedule.n();
    let horizon = schedule.horizon();
    let mut buffer_staleness = 0;
    let mut broadcast_staleness = 0;
    for e in schedule.counted() {
        let s = e.staleness.unwrap_or(0);
        match e.kind {
            EventKind::WorkerFinish { .. } => broadcast_staleness = broadcast_staleness.max(s),
            _ => buffer_staleness = buffer_staleness.max(s),
        }
    }
    let max_staleness = buffer_staleness.max(broadcast_staleness);
    let acts = activations(schedule);
    let entity = |idx: usize| if idx == n { Entity::Server } else { Entity::Worker(idx) };

    let mut violations: Vec<Violation> = acts
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_empty())
        .map(|(idx, _)| Violation::Stalled(entity(idx)))
        .collect();

    let prefixes: Vec<Vec<u32>> = acts.iter().map(|a| prefix_counts(a, horizon)).collect();

    let window = if violations.is_empty() {
        let b = acts
            .iter()
            .map(|a| {
                let first = a[0];
                let last_gap = horizon - a[a.len() - 1] + 1;
                let inner = a.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
                first.max(last_gap).max(inner)
            })
            .max()
            .unwrap_or(horizon);
        let p = prefixes
            .iter()
            .flat_map(|pr| window_counts(b, horizon, pr))
            .min()
            .unwrap_or(0) as u64;
        Some(ActivationWindow { p, b })
    } else {
        None
    };

    let strict_window = if violations.is_empty() {
        (1..=horizon.min(STRICT_WINDOW_SEARCH)).find_map(|b| {
            let p = prefixes[0][b as usize];
            if p == 0 {
                return None;
            }
            prefixes
                .iter()
                .all(|pr| window_counts(b, horizon, pr).all(|c| c == p))
                .then_some(ActivationWindow { p: p as u64, b })
        })
    } else {
        None
    };

    if let Some(w) = window {
        if max_staleness > w.b {
            violations.push(Violation::StalenessExceedsWindow {
                staleness: max_staleness,
                window: w.b,
            });
        }
    }
    AssumptionReport {
        max_staleness,
        buffer_staleness,
        broadcast_staleness,
        window,
        strict_window,
        violations,
    }
}

/// Contents of the server buffer before the first receipt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BufferInit {
    /// `b⁰ = 0`.
    #[default]
    Zero,
    /// `b⁰ = θ⁰`.
    Synchronized,
}

/// Primal iterates, dual iterate, server buffer, inboxes, counter and clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub theta: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub buffer: Vec<Vec<f64>>,
    pub inboxes: Vec<DelayedDualTerm>,
    pub k: u64,
    pub clock: u64,
}

impl SystemState {
    /// `θ⁰` projected onto the boxes, `λ⁰ = 0`, `b⁰ = 0`, zero inboxes.
    pub fn initial(spec: &ProblemSpec, theta0: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        Self::with_buffer(spec, theta0, BufferInit::Zero)
    }

    pub fn with_buffer(spec: &ProblemSpec, theta0: Vec<Vec<f64>>, init: BufferInit) -> Result<Self, ModelError> {
        let (n, d, m) = (spec.n(), spec.d(), spec.m());
        spec.check_joint(&theta0, &vec![0.0; m])?;
        let theta: Vec<Vec<f64>> = theta0
            .into_iter()
            .zip(spec.boxes())
            .map(|(mut t, b)| {
                b.project_in_place(&mut t);
                t
            })
            .collect();
        let buffer = match init {
            BufferInit::Zero => vec![vec![0.0; d]; n],
            BufferInit::Synchronized => theta.clone(),
        };
        Ok(Self {
            theta,
            lambda: vec![0.0; m],
            buffer,
            inboxes: vec![DelayedDualTerm::initial(d); n],
            k: 0,
            clock: 0,
        })
    }
}

/// Replays a schedule against a problem instance.
#[derive(Debug)]
pub struct Simulator<S: Sampler> {
    spec: ProblemSpec,
    schedule: Schedule,
    rule: StepSizeRule,
    samplers: Vec<S>,
    state: SystemState,
    cursor: usize,
    uploads: HashMap<usize, Vec<f64>>,
    broadcasts: HashMap<usize, (DelayedDualTerm, usize)>,
}

impl<S: Sampler> Simulator<S> {
    pub fn new(
        spec: ProblemSpec,
        schedule: Schedule,
        rule: StepSizeRule,
        samplers: Vec<S>,
        state: SystemState,
    ) -> Result<Self, EngineError> {
        if samplers.len() != spec.n() {
            return Err(ModelError::DimensionMismatch {
                what: "sample streams",
                expected: spec.n(),
                found: samplers.len(),
            }
            .into());
        }
        spec.check_joint(&state.theta, &state.lambda)?;
        Ok(Self {
            spec,
            schedule,
            rule,
            samplers,
            state,
            cursor: 0,
            uploads: HashMap::new(),
            broadcasts: HashMap::new(),
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Processes the next event; `None` once the schedule is exhausted.
    pub fn step(&mut self) -> Result<Option<Event>, EngineError> {
        let Some(&event) = self.schedule.events.get(self.cursor) else {
            return Ok(None);
        };
        let n = self.spec.n();
        let worker = event.kind.worker();
        if worker >= n {
            return Err(EngineError::UnknownWorker { worker, n });
        }
        let idx = self.cursor;
        self.cursor += 1;
        let state = &mut self.state;
        state.clock = event.tick;
        match event.kind {
            EventKind::WorkerFinish { worker } => {
                let gamma = self.rule.gamma(state.k as i64 + 1);
                let z = sample_vector(&mut self.samplers[worker], self.spec.d());
                let grad = delayed_primal_gradient(&state.theta[worker], &z, &state.inboxes[worker]);
                let theta = &mut state.theta[worker];
                theta.iter_mut().zip(&grad).for_each(|(t, g)| *t -= gamma * g);
                self.spec.boxes()[worker].project_in_place(theta);
                self.uploads.insert(idx, theta.clone());
                state.k += 1;
            }
            EventKind::ServerReceive { worker, upload } => {
                let model = self
                    .uploads
                    .remove(&upload)
                    .ok_or(EngineError::DanglingMessage { event: idx })?;
                state.buffer[worker] = model;
                let avg = self.spec.average(&state.buffer);
                let term = DelayedDualTerm {
                    payload: self.spec.dual_correction(&avg, &state.lambda),
                    issued_at: Some(state.k),
                    deliver_at: 0,
                };
                self.broadcasts.insert(idx, (term, n));
                let gamma = self.rule.gamma(state.k as i64 + 1);
                let grad = dual_gradient(&self.spec, &state.buffer, &state.lambda);
                state.lambda.iter_mut().zip(&grad).for_each(|(l, g)| *l += gamma * g);
                self.spec.project_dual_in_place(&mut state.lambda);
                state.k += 1;
            }
            EventKind::BroadcastDeliver { worker, broadcast } => {
                let entry = self
                    .broadcasts
                    .get_mut(&broadcast)
                    .ok_or(EngineError::DanglingMessage { event: idx })?;
                let mut term = entry.0.clone();
                term.deliver_at = event.tick;
                entry.1 -= 1;
                if entry.1 == 0 {
                    self.broadcasts.remove(&broadcast);
                }
                state.inboxes[worker] = term;
            }
        }
        Ok(Some(event))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::SampleStream;

    fn kinds(s: &Schedule) -> Vec<(u64, &'static str, usize)> {
        s.counted().map(|e| (e.k, e.kind.label(), e.kind.worker())).collect()
    }

    #[test]
    fn single_worker_alternates() {
        let s = build_schedule(&DelayModel::zero_delay(1), 10).unwrap();
        let labels: Vec<_> = s.counted().map(|e| e.kind.label()).collect();
        for (i, l) in labels.iter().enumerate() {
            let expected = if i % 2 == 0 { "worker-finish" } else { "server-receive" };
            assert_eq!(*l, expected);
        }
        let r = validate_assumptions(&s);
        assert_eq!(r.window, Some(ActivationWindow { p: 1, b: 2 }));
        assert_eq!(r.strict_window, Some(ActivationWindow { p: 1, b: 2 }));
        assert!(r.is_clean());
    }

    #[test]
    fn two_unit_workers_interleave_per_receipt() {
        let s = build_schedule(&DelayModel::zero_delay(2), 8).unwrap();
        assert_eq!(
            kinds(&s),
            vec![
                (1, "worker-finish", 0),
                (2, "server-receive", 0),
                (3, "worker-finish", 1),
                (4, "server-receive", 1),
                (5, "worker-finish", 0),
                (6, "server-receive", 0),
                (7, "worker-finish", 1),
                (8, "server-receive", 1),
            ]
        );
        let r = validate_assumptions(&s);
        assert_eq!(r.window, Some(ActivationWindow { p: 1, b: 4 }));
        assert_eq!(r.strict_window, None);
    }

    #[test]
    fn fast_worker_activates_twice_per_slow_one() {
        let delay = DelayModel::new(vec![2, 1], 0, 0).unwrap();
        let s = build_schedule(&delay, 200).unwrap();
        let acts = activations(&s);
        // Steady state from k = 3: every 6-window holds W1 once, W2 twice.
        for start in 3..=(200 - 5) {
            let count = |a: &Vec<u64>| a.iter().filter(|&&k| k >= start && k < start + 6).count();
            assert_eq!(count(&acts[0]), 1, "start {start}");
            assert_eq!(count(&acts[1]), 2, "start {start}");
            assert_eq!(count(&acts[2]), 3, "start {start}");
        }
    }

    #[test]
    fn counter_counts_finishes_and_receipts() {
        let delay = DelayModel::new(vec![4, 4, 3, 2, 1], 2, 1).unwrap();
        let s = build_schedule(&delay, 500).unwrap();
        assert_eq!(s.counted().count(), 500);
        for (i, e) in s.counted().enumerate() {
            assert_eq!(e.k, i as u64 + 1);
        }
        assert!(s.events().windows(2).all(|w| w[0].tick <= w[1].tick));
    }

    #[test]
    fn finish_ticks_follow_durations() {
        let delay = DelayModel::new(vec![4, 3], 2, 1).unwrap();
        let s = build_schedule(&delay, 60).unwrap();
        for e in s.events() {
            match e.kind {
                EventKind::WorkerFinish { worker } => {
                    assert_eq!(e.tick % [4, 3][worker], 0);
                }
                EventKind::ServerReceive { upload, .. } => {
                    assert_eq!(e.tick, s.events()[upload].tick + 2);
                }
                EventKind::BroadcastDeliver { broadcast, .. } => {
                    assert_eq!(e.tick, s.events()[broadcast].tick + 1);
                }
            }
        }
    }

    #[test]
    fn halted_worker_is_flagged() {
        let delay = DelayModel::with_halted(vec![Some(1), None, Some(2)], 1, 1).unwrap();
        let s = build_schedule(&delay, 100).unwrap();
        let r = validate_assumptions(&s);
        assert!(r.violations.contains(&Violation::Stalled(Entity::Worker(1))));
        assert_eq!(r.window, None);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            build_schedule(&DelayModel::zero_delay(1), 0),
            Err(EngineError::ZeroHorizon)
        ));
        assert!(DelayModel::new(vec![], 0, 0).is_err());
        assert!(DelayModel::new(vec![1, 0], 0, 0).is_err());
        assert!(DelayModel::with_halted(vec![None], 0, 0).is_err());
        assert_eq!(
            DelayModel::new(vec![10, 4, 3, 2, 1], 2, 1).unwrap().round_ticks(),
            Some(13)
        );
    }

    #[test]
    fn unknown_worker_is_an_error() {
        let spec = ProblemSpec::five_worker_allocation(10.0);
        let small = ProblemSpec::new(
            vec![vec![1.0]],
            0.0,
            vec![spec.boxes()[0].clone()],
            std::sync::Arc::new(crate::model::AffineConstraint::capacity(1.0)),
            1.0,
            0.1,
        )
        .unwrap();
        let schedule = build_schedule(&DelayModel::new(vec![2, 1], 0, 0).unwrap(), 4).unwrap();
        let state = SystemState::initial(&small, vec![vec![0.0]]).unwrap();
        let streams = SampleStream::for_spec(&small, 0);
        let mut sim = Simulator::new(small, schedule, StepSizeRule::Constant(0.1), streams, state).unwrap();
        assert!(matches!(sim.step(), Err(EngineError::UnknownWorker { worker: 1, n: 1 })));
    }

    #[test]
    fn inactive_workers_keep_their_iterates() {
        let spec = ProblemSpec::five_worker_allocation(10.0);
        let delay = DelayModel::new(vec![4, 4, 3, 2, 1], 2, 1).unwrap();
        let schedule = build_schedule(&delay, 300).unwrap();
        let theta0: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let state = SystemState::initial(&spec, theta0).unwrap();
        let streams = SampleStream::for_spec(&spec, 9);
        let rule = StepSizeRule::Inverse { a0: 10.0, a1: 100.0 };
        let mut sim = Simulator::new(spec.clone(), schedule, rule, streams, state).unwrap();
        let mut prev = sim.state().clone();
        while let Some(e) = sim.step().unwrap() {
            let cur = sim.state();
            for i in 0..5 {
                if e.kind != (EventKind::WorkerFinish { worker: i }) {
                    assert_eq!(cur.theta[i], prev.theta[i]);
                }
                assert!(spec.boxes()[i].contains(&cur.theta[i]));
            }
            if !matches!(e.kind, EventKind::ServerReceive { .. }) {
                assert_eq!(cur.lambda, prev.lambda);
            }
            assert!(cur.lambda.iter().all(|l| (0.0..=10.0).contains(l)));
            assert_eq!(cur.k, e.k);
            prev = cur.clone();
        }
        assert_eq!(sim.state().k, 300);
    }

    #[test]
    fn consumed_payload_age_matches_annotation() {
        let spec = ProblemSpec::five_worker_allocation(10.0);
        let delay = DelayModel::new(vec![4, 4, 3, 2, 1], 2, 1).unwrap();
        let schedule = build_schedule(&delay, 400).unwrap();
        let state = SystemState::initial(&spec, vec![vec![1.0]; 5]).unwrap();
        let streams = SampleStream::for_spec(&spec, 1);
        let rule = StepSizeRule::Inverse { a0: 10.0, a1: 100.0 };
        let mut sim = Simulator::new(spec, schedule, rule, streams, state).unwrap();
        loop {
            let before = sim.state().clone();
            let Some(e) = sim.step().unwrap() else { break };
            if let EventKind::WorkerFinish { worker } = e.kind {
                if let Some(v) = before.inboxes[worker].issued_at {
                    assert_eq!(e.staleness, Some(before.k - v));
                }
            }
        }
    }

    #[test]
    fn event_log_is_tab_separated() {
        let s = build_schedule(&DelayModel::zero_delay(1), 2).unwrap();
        let mut out = Vec::new();
        s.write_event_log(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "tick\tk\tkind\tworker\tstaleness");
        assert_eq!(lines[1], "1\t1\tworker-finish\t0\t0");
        assert_eq!(lines[2], "1\t2\tserver-receive\t0\t0");
    }
}
