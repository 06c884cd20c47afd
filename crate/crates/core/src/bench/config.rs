//! Experiment configuration: a TOML document with four tables.
//!
//! ```toml
//! [problem]
//! means = [10.0, 10.0, 10.0, 12.0, 12.0]   # z̄_i, one scalar per worker
//! noise_sd = 2.0                            # σ
//! capacity = 5.0                            # c in g(θ̄) = θ̄ − c
//! box_lower = [0.0, 0.0, 0.0, 0.0, 0.0]
//! box_upper = [7.0, 7.0, 7.0, 10.0, 10.0]
//! lambda_max = 10.0                         # Λ = [0, lambda_max]
//! upsilon = 1e-5                            # υ
//! dual_scaling = false                      # true: 1/n on the coupling term
//!
//! [schedule]
//! compute_ticks = [4, 4, 3, 2, 1]           # v_i, ticks per update
//! upload_delay = 2                          # τ_up
//! broadcast_delay = 1                       # τ_bc
//! buffer_init = "synchronized"              # "zero" | "synchronized"
//!
//! [stepsize]
//! kind = "inverse"                          # "inverse": a0/(a1+k) | "constant": gamma
//! a0 = 10.0
//! a1 = 100.0
//!
//! [run]
//! horizon = 20000
//! seeds = 10                                # a count (master_seed + i) or a list
//! master_seed = 0
//! checkpoint_stride = 100
//! algorithms = ["apd", "sync"]
//! ```
//!
//! Every key is required except `buffer_init` (default `"zero"`),
//! `master_seed` (default 0), `checkpoint_stride` (default 1) and
//! `algorithms` (default both).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{BufferInit, DelayModel};
use crate::model::{AffineConstraint, BoxSet, DualScaling, ProblemSpec};
use crate::solvers::{Algorithm, StepSizeRule};

/// One violated configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Parse(String),
    Invalid(Vec<FieldError>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::Invalid(errors) => {
                write!(f, "invalid config:")?;
                for e in errors {
                    write!(f, "\n  {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Option<RawProblem>,
    schedule: Option<RawSchedule>,
    stepsize: Option<RawStepSize>,
    run: Option<RawRun>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    means: Option<Vec<f64>>,
    noise_sd: Option<f64>,
    capacity: Option<f64>,
    box_lower: Option<Vec<f64>>,
    box_upper: Option<Vec<f64>>,
    lambda_max: Option<f64>,
    upsilon: Option<f64>,
    dual_scaling: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    compute_ticks: Option<Vec<u64>>,
    upload_delay: Option<u64>,
    broadcast_delay: Option<u64>,
    buffer_init: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStepSize {
    kind: Option<String>,
    a0: Option<f64>,
    a1: Option<f64>,
    gamma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawSeeds {
    Count(u64),
    List(Vec<u64>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    horizon: Option<u64>,
    seeds: Option<RawSeeds>,
    master_seed: Option<u64>,
    checkpoint_stride: Option<u64>,
    algorithms: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemConfig {
    pub means: Vec<f64>,
    pub noise_sd: f64,
    pub capacity: f64,
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
    pub lambda_max: f64,
    pub upsilon: f64,
    pub dual_scaling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleConfig {
    pub compute_ticks: Vec<u64>,
    pub upload_delay: u64,
    pub broadcast_delay: u64,
    pub buffer_init: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepSizeConfig {
    Inverse { a0: f64, a1: f64 },
    Constant { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub checkpoint_stride: u64,
    pub algorithms: Vec<String>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub schedule: ScheduleConfig,
    pub stepsize: StepSizeConfig,
    pub run: RunConfig,
}

struct Collector(Vec<FieldError>);

impl Collector {
    fn push(&mut self, field: &str, reason: impl Into<String>) {
        self.0.push(FieldError {
            field: field.to_string(),
            reason: reason.into(),
        });
    }

    fn require<T: Clone>(&mut self, field: &str, value: &Option<T>) -> Option<T> {
        if value.is_none() {
            self.push(field, "missing");
        }
        value.clone()
    }
}

fn finite(c: &mut Collector, field: &str, v: &Option<f64>, positive: bool) -> Option<f64> {
    let v = c.require(field, v)?;
    let ok = v.is_finite() && if positive { v > 0.0 } else { v >= 0.0 };
    if !ok {
        let bound = if positive { "> 0" } else { ">= 0" };
        c.push(field, format!("must be finite and {bound}, got {v}"));
        return None;
    }
    Some(v)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::validate(raw)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn validate(raw: RawConfig) -> Result<Self, ConfigError> {
        let mut c = Collector(Vec::new());
        let p = raw.problem.unwrap_or_else(|| {
            c.push("problem", "missing table");
            RawProblem::default()
        });
        let s = raw.schedule.unwrap_or_else(|| {
            c.push("schedule", "missing table");
            RawSchedule::default()
        });
        let g = raw.stepsize.unwrap_or_else(|| {
            c.push("stepsize", "missing table");
            RawStepSize::default()
        });
        let r = raw.run.unwrap_or_else(|| {
            c.push("run", "missing table");
            RawRun::default()
        });

        let means = c.require("problem.means", &p.means);
        let n = means.as_ref().map(Vec::len);
        if n == Some(0) {
            c.push("problem.means", "at least one worker is required");
        }
        if let Some(m) = &means {
            if m.iter().any(|v| !v.is_finite()) {
                c.push("problem.means", "entries must be finite");
            }
        }
        let noise_sd = finite(&mut c, "problem.noise_sd", &p.noise_sd, false);
        let capacity = c.require("problem.capacity", &p.capacity);
        if capacity.is_some_and(|v| !v.is_finite()) {
            c.push("problem.capacity", "must be finite");
        }
        let box_lower = c.require("problem.box_lower", &p.box_lower);
        let box_upper = c.require("problem.box_upper", &p.box_upper);
        let check_len = |c: &mut Collector, field: &str, len: usize| {
            if let Some(n) = n {
                if len != n {
                    c.push(field, format!("has {len} entries, expected {n} (one per worker)"));
                }
            }
        };
        if let Some(lo) = &box_lower {
            check_len(&mut c, "problem.box_lower", lo.len());
        }
        if let Some(hi) = &box_upper {
            check_len(&mut c, "problem.box_upper", hi.len());
        }
        if let (Some(lo), Some(hi)) = (&box_lower, &box_upper) {
            for (i, (a, b)) in lo.iter().zip(hi).enumerate() {
                if !(a.is_finite() && b.is_finite() && a <= b) {
                    c.push("problem.box_upper", format!("worker {i}: [{a}, {b}] is not a bounded interval"));
                }
            }
        }
        let lambda_max = finite(&mut c, "problem.lambda_max", &p.lambda_max, true);
        let upsilon = finite(&mut c, "problem.upsilon", &p.upsilon, true);
        let dual_scaling = c.require("problem.dual_scaling", &p.dual_scaling);

        let compute_ticks = c.require("schedule.compute_ticks", &s.compute_ticks);
        if let Some(v) = &compute_ticks {
            check_len(&mut c, "schedule.compute_ticks", v.len());
            if v.contains(&0) {
                c.push("schedule.compute_ticks", "durations must be positive");
            }
        }
        let upload_delay = c.require("schedule.upload_delay", &s.upload_delay);
        let broadcast_delay = c.require("schedule.broadcast_delay", &s.broadcast_delay);
        let buffer_init = s.buffer_init.clone().unwrap_or_else(|| "zero".into());
        if !matches!(buffer_init.as_str(), "zero" | "synchronized") {
            c.push("schedule.buffer_init", format!("expected \"zero\" or \"synchronized\", got {buffer_init:?}"));
        }

        let stepsize = match g.kind.as_deref() {
            Some("inverse") => {
                let a0 = finite(&mut c, "stepsize.a0", &g.a0, true);
                let a1 = c.require("stepsize.a1", &g.a1);
                if a1.is_some_and(|v| !(v.is_finite() && v > -1.0)) {
                    c.push("stepsize.a1", "must be finite and > -1");
                }
                if g.gamma.is_some() {
                    c.push("stepsize.gamma", "not used by the inverse rule");
                }
                a0.zip(a1).map(|(a0, a1)| StepSizeConfig::Inverse { a0, a1 })
            }
            Some("constant") => {
                let gamma = finite(&mut c, "stepsize.gamma", &g.gamma, true);
                if g.a0.is_some() || g.a1.is_some() {
                    c.push("stepsize.a0", "not used by the constant rule");
                }
                gamma.map(|gamma| StepSizeConfig::Constant { gamma })
            }
            Some(other) => {
                c.push("stepsize.kind", format!("expected \"inverse\" or \"constant\", got {other:?}"));
                None
            }
            None => {
                c.push("stepsize.kind", "missing");
                None
            }
        };

        let horizon = c.require("run.horizon", &r.horizon);
        if horizon == Some(0) {
            c.push("run.horizon", "must be at least 1");
        }
        let master_seed = r.master_seed.unwrap_or(0);
        let seeds = match c.require("run.seeds", &r.seeds) {
            Some(RawSeeds::Count(k)) => (0..k).map(|i| master_seed.wrapping_add(i)).collect(),
            Some(RawSeeds::List(list)) => list,
            None => Vec::new(),
        };
        if r.seeds.is_some() && seeds.is_empty() {
            c.push("run.seeds", "at least one seed is required");
        }
        let checkpoint_stride = r.checkpoint_stride.unwrap_or(1);
        if checkpoint_stride == 0 {
            c.push("run.checkpoint_stride", "must be at least 1");
        }
        let algorithms = r
            .algorithms
            .clone()
            .unwrap_or_else(|| vec!["apd".into(), "sync".into()]);
        if algorithms.is_empty() {
            c.push("run.algorithms", "at least one algorithm is required");
        }
        for a in &algorithms {
            if Algorithm::from_label(a).is_none() {
                c.push("run.algorithms", format!("unknown algorithm {a:?}; expected \"apd\" or \"sync\""));
            }
        }

        if !c.0.is_empty() {
            return Err(ConfigError::Invalid(c.0));
        }
        let unwrap = "validated above";
        Ok(Self {
            problem: ProblemConfig {
                means: means.expect(unwrap),
                noise_sd: noise_sd.expect(unwrap),
                capacity: capacity.expect(unwrap),
                box_lower: box_lower.expect(unwrap),
                box_upper: box_upper.expect(unwrap),
                lambda_max: lambda_max.expect(unwrap),
                upsilon: upsilon.expect(unwrap),
                dual_scaling: dual_scaling.expect(unwrap),
            },
            schedule: ScheduleConfig {
                compute_ticks: compute_ticks.expect(unwrap),
                upload_delay: upload_delay.expect(unwrap),
                broadcast_delay: broadcast_delay.expect(unwrap),
                buffer_init,
            },
            stepsize: stepsize.expect(unwrap),
            run: RunConfig {
                horizon: horizon.expect(unwrap),
                seeds,
                checkpoint_stride,
                algorithms,
            },
        })
    }

    /// Canonical TOML; seeds are always written as an explicit list.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let p = &self.problem;
        let boxes = p
            .box_lower
            .iter()
            .zip(&p.box_upper)
            .map(|(lo, hi)| BoxSet::cube(1, *lo, *hi).expect("validated box"))
            .collect();
        let scaling = if p.dual_scaling {
            DualScaling::Averaged
        } else {
            DualScaling::Unscaled
        };
        ProblemSpec::new(
            p.means.iter().map(|m| vec![*m]).collect(),
            p.noise_sd,
            boxes,
            Arc::new(AffineConstraint::capacity(p.capacity)),
            p.lambda_max,
            p.upsilon,
        )
        .expect("validated problem")
        .with_dual_scaling(scaling)
    }

    pub fn delay_model(&self) -> DelayModel {
        let s = &self.schedule;
        DelayModel::new(s.compute_ticks.clone(), s.upload_delay, s.broadcast_delay).expect("validated schedule")
    }

    pub fn buffer_init(&self) -> BufferInit {
        match self.schedule.buffer_init.as_str() {
            "synchronized" => BufferInit::Synchronized,
            _ => BufferInit::Zero,
        }
    }

    pub fn rule(&self) -> StepSizeRule {
        match self.stepsize {
            StepSizeConfig::Inverse { a0, a1 } => StepSizeRule::Inverse { a0, a1 },
            StepSizeConfig::Constant { gamma } => StepSizeRule::Constant(gamma),
        }
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        self.run
            .algorithms
            .iter()
            .filter_map(|a| Algorithm::from_label(a))
            .collect()
    }

    /// Heterogeneous-speed scenario: `v = [4, 4, 3, 2, 1]`, 10 seeds.
    pub fn fig2() -> Self {
        Self::from_toml_str(FIG2).expect("built-in scenario is valid")
    }

    /// One straggler: `v = [10, 4, 3, 2, 1]`, 10 seeds.
    pub fn fig3() -> Self {
        let mut c = Self::fig2();
        c.schedule.compute_ticks = vec![10, 4, 3, 2, 1];
        c
    }

    pub fn scenario(name: &str) -> Option<Self> {
        match name {
            "fig2" => Some(Self::fig2()),
            "fig3" => Some(Self::fig3()),
            _ => None,
        }
    }
}

const FIG2: &str = r#"
[problem]
means = [10.0, 10.0, 10.0, 12.0, 12.0]
noise_sd = 2.0
capacity = 5.0
box_lower = [0.0, 0.0, 0.0, 0.0, 0.0]
box_upper = [7.0, 7.0, 7.0, 10.0, 10.0]
lambda_max = 10.0
upsilon = 1e-5
dual_scaling = false

[schedule]
compute_ticks = [4, 4, 3, 2, 1]
upload_delay = 2
broadcast_delay = 1
buffer_init = "synchronized"

[stepsize]
kind = "inverse"
a0 = 10.0
a1 = 100.0

[run]
horizon = 20000
seeds = 10
master_seed = 0
checkpoint_stride = 100
algorithms = ["apd", "sync"]
"#;
