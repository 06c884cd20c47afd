//! Experiment harness: configuration, seeded repetitions across a worker
//! pool, CSV artifacts and summary statistics.

pub mod config;
pub mod csvio;
pub mod summary;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{bound_curve, compute_bound_constants, AnalysisError, BoundConstants, BoundCurve};
use crate::engine::{build_schedule, validate_assumptions, AssumptionReport, EngineError};
use crate::model::{compute_constants, ModelError, SmoothnessConstants, DEFAULT_TRUNCATION};
use crate::solvers::{
    check_stepsize_conditions, run_apd, run_sync_pd, Algorithm, RunOptions, RunTrace, SolverError, StepSizeReport,
};

pub use config::{ConfigError, ExperimentConfig, FieldError, StepSizeConfig};
pub use summary::{summarize, Summary, SummaryRow, ThresholdRow};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "APD_OUT_DIR";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error("no traces to summarize")]
    Empty,
    #[error("artifacts from different configs: {expected} and {found}")]
    MixedConfig { expected: String, found: String },
}

/// Assumption and step-size diagnostics for the APD schedule of a config.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub constants: SmoothnessConstants,
    pub assumptions: AssumptionReport,
    /// `None` when no activation window exists.
    pub stepsize: Option<StepSizeReport>,
    pub bound: Option<BoundConstants>,
}

impl ValidationReport {
    pub fn stepsize_passed(&self) -> bool {
        self.stepsize.as_ref().is_some_and(StepSizeReport::passed)
    }
}

pub fn validate_config(config: &ExperimentConfig) -> Result<ValidationReport, BenchError> {
    let spec = config.problem_spec();
    let constants = compute_constants(&spec, DEFAULT_TRUNCATION)?;
    let schedule = build_schedule(&config.delay_model(), config.run.horizon)?;
    let assumptions = validate_assumptions(&schedule);
    let rule = config.rule();
    let horizon = config.run.horizon;
    let (stepsize, bound) = match assumptions.window {
        Some(w) => (
            Some(check_stepsize_conditions(&rule, w.p, w.b, constants.monotonicity, horizon)),
            Some(compute_bound_constants(&constants, w, assumptions.max_staleness, &rule, horizon)),
        ),
        None => (None, None),
    };
    Ok(ValidationReport {
        constants,
        assumptions,
        stepsize,
        bound,
    })
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub traces: Vec<RunTrace>,
    pub summary: Summary,
    pub validation: ValidationReport,
    /// Present when the step-size conditions pass and APD was run.
    pub bound: Option<BoundCurve>,
}

pub fn run_options(config: &ExperimentConfig) -> RunOptions {
    RunOptions {
        checkpoint_stride: config.run.checkpoint_stride,
        buffer_init: config.buffer_init(),
        ..RunOptions::default()
    }
}

pub fn run_one(config: &ExperimentConfig, algorithm: Algorithm, seed: u64) -> Result<RunTrace, BenchError> {
    let spec = config.problem_spec();
    let delay = config.delay_model();
    let rule = config.rule();
    let opts = run_options(config);
    let mut trace = match algorithm {
        Algorithm::Apd => run_apd(&spec, &delay, &rule, seed, config.run.horizon, &opts)?,
        Algorithm::SyncPd => run_sync_pd(&spec, &delay, &rule, seed, config.run.horizon, &opts)?,
    };
    trace.config_hash = config.hash();
    Ok(trace)
}

/// Runs every (algorithm, seed) pair on the rayon pool; results come back in
/// config order regardless of completion order.
pub fn run_traces(config: &ExperimentConfig) -> Result<Vec<RunTrace>, BenchError> {
    let jobs: Vec<(Algorithm, u64)> = config
        .algorithms()
        .into_iter()
        .flat_map(|a| config.run.seeds.iter().map(move |&s| (a, s)))
        .collect();
    jobs.par_iter().map(|&(a, s)| run_one(config, a, s)).collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Artifacts, BenchError> {
    let validation = validate_config(config)?;
    let traces = run_traces(config)?;
    let summary = summarize(&traces)?;
    let bound = match (&validation.bound, validation.stepsize_passed()) {
        (Some(consts), true) => {
            let apd: Vec<&SummaryRow> = summary.rows_for(Algorithm::Apd).collect();
            apd.first().filter(|r| r.k == 0).map(|r0| {
                let ks: Vec<u64> = apd.iter().map(|r| r.k).collect();
                bound_curve(&ks, r0.mean, consts, &config.rule(), true)
            })
        }
        _ => None,
    };
    Ok(Artifacts {
        config_hash: config.hash(),
        config: config.clone(),
        traces,
        summary,
        validation,
        bound,
    })
}

/// Writes `config.toml`, `traces.csv`, `summary.csv`, `thresholds.csv` and,
/// when present, `bound.csv`. Returns the written paths.
pub fn write_artifacts(artifacts: &Artifacts, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut open = |name: &str| -> Result<BufWriter<File>, BenchError> {
        let path = dir.join(name);
        let f = File::create(&path)?;
        written.push(path);
        Ok(BufWriter::new(f))
    };
    std::io::Write::write_all(&mut open("config.toml")?, artifacts.config.to_toml_string().as_bytes())?;
    csvio::write_traces(&artifacts.traces, open("traces.csv")?)?;
    csvio::write_summary(&artifacts.summary, open("summary.csv")?)?;
    csvio::write_thresholds(&artifacts.summary, open("thresholds.csv")?)?;
    if let Some(curve) = &artifacts.bound {
        csvio::write_bound(&artifacts.config_hash, curve, open("bound.csv")?)?;
    }
    Ok(written)
}

/// Reads `traces.csv` from a directory and checks that every other artifact
/// there carries the same config hash.
pub fn load_artifacts(dir: &Path) -> Result<Vec<RunTrace>, BenchError> {
    let traces = csvio::read_traces(File::open(dir.join("traces.csv"))?)?;
    let expected = traces.first().ok_or(BenchError::Empty)?.config_hash.clone();
    let mut hashes: Vec<String> = traces.iter().map(|t| t.config_hash.clone()).collect();
    for name in ["summary.csv", "thresholds.csv", "bound.csv"] {
        let path = dir.join(name);
        if path.exists() {
            hashes.extend(csvio::read_config_hashes(File::open(path)?)?);
        }
    }
    if let Some(found) = hashes.into_iter().find(|h| *h != expected) {
        return Err(BenchError::MixedConfig { expected, found });
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(sd: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::fig2();
        c.problem.noise_sd = sd;
        c.run.horizon = 600;
        c.run.checkpoint_stride = 50;
        c
    }

    #[test]
    fn experiment_is_reproducible_and_ordered() {
        let c = small(2.0);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.traces, b.traces);
        let order: Vec<(Algorithm, u64)> = a.traces.iter().map(|t| (t.algorithm, t.seed)).collect();
        let expected: Vec<(Algorithm, u64)> = [Algorithm::Apd, Algorithm::SyncPd]
            .into_iter()
            .flat_map(|a| (0..10).map(move |s| (a, s)))
            .collect();
        assert_eq!(order, expected);
        assert!(a.traces.iter().all(|t| t.config_hash == c.hash()));
    }

    #[test]
    fn band_widens_with_noise() {
        let widths: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&sd| {
                let s = summarize(&run_traces(&small(sd)).unwrap()).unwrap();
                let tail: Vec<&SummaryRow> = s.rows_for(Algorithm::Apd).filter(|r| r.k >= 300).collect();
                tail.iter().map(|r| r.p95 - r.p05).sum::<f64>() / tail.len() as f64
            })
            .collect();
        assert!(widths[0] < widths[1] && widths[1] < widths[2], "{widths:?}");
    }

    #[test]
    fn artifacts_round_trip_and_reject_mixing() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(2.0);
        c.run.seeds = vec![3, 5];
        let art = run_experiment(&c).unwrap();
        write_artifacts(&art, dir.path()).unwrap();
        assert_eq!(load_artifacts(dir.path()).unwrap().len(), art.traces.len());
        let back = load_artifacts(dir.path()).unwrap();
        for (x, y) in back.iter().zip(&art.traces) {
            assert_eq!(x.records, y.records);
        }

        let mut other = c.clone();
        other.problem.noise_sd = 1.0;
        let foreign = run_experiment(&other).unwrap();
        csvio::write_summary(&foreign.summary, File::create(dir.path().join("summary.csv")).unwrap()).unwrap();
        assert!(matches!(load_artifacts(dir.path()), Err(BenchError::MixedConfig { .. })));
    }
}
