use std::collections::BTreeMap;

use crate::solvers::{Algorithm, RunTrace, DEFAULT_THRESHOLDS};

use super::BenchError;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub k: u64,
    pub tick: u64,
    pub runs: usize,
    pub mean: f64,
    pub p05: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub algorithm: Algorithm,
    pub threshold: f64,
    pub runs: usize,
    pub reached: usize,
    /// Unreached runs count as `+∞`; `None` when the median is infinite.
    pub median_tick: Option<f64>,
    pub median_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub config_hash: String,
    pub rows: Vec<SummaryRow>,
    pub thresholds: Vec<ThresholdRow>,
}

impl Summary {
    pub fn rows_for(&self, algorithm: Algorithm) -> impl Iterator<Item = &SummaryRow> {
        self.rows.iter().filter(move |r| r.algorithm == algorithm)
    }

    pub fn threshold(&self, algorithm: Algorithm, threshold: f64) -> Option<&ThresholdRow> {
        self.thresholds
            .iter()
            .find(|r| r.algorithm == algorithm && r.threshold == threshold)
    }
}

/// Percentile of sorted data with linear interpolation between order
/// statistics at position `q(N − 1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median where `None` sorts above every value.
pub fn median_with_infinity(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    m.is_finite().then_some(m)
}

/// First `(k, tick)` with `Δ ≤ threshold`: exact when the run recorded it,
/// otherwise the first checkpoint that satisfies it.
pub fn first_hit(trace: &RunTrace, threshold: f64) -> Option<(u64, u64)> {
    match trace.hit(threshold) {
        Some(h) => h.k.zip(h.tick),
        None => trace
            .records
            .iter()
            .find(|r| r.delta <= threshold)
            .map(|r| (r.k, r.tick)),
    }
}

/// Per-(algorithm, checkpoint) statistics of `Δ^k` across seeds and the
/// time-to-threshold table.
pub fn summarize(traces: &[RunTrace]) -> Result<Summary, BenchError> {
    let first = traces.first().ok_or(BenchError::Empty)?;
    let hash = first.config_hash.clone();
    if let Some(other) = traces.iter().find(|t| t.config_hash != hash) {
        return Err(BenchError::MixedConfig {
            expected: hash,
            found: other.config_hash.clone(),
        });
    }
    let mut groups: BTreeMap<(Algorithm, u64), (u64, Vec<f64>)> = BTreeMap::new();
    let mut runs: BTreeMap<Algorithm, usize> = BTreeMap::new();
    for t in traces {
        *runs.entry(t.algorithm).or_default() += 1;
        for r in &t.records {
            let entry = groups.entry((t.algorithm, r.k)).or_insert((r.tick, Vec::new()));
            if entry.0 != r.tick {
                return Err(BenchError::Format(format!(
                    "{} checkpoint k={} has ticks {} and {} across seeds",
                    t.algorithm.label(),
                    r.k,
                    entry.0,
                    r.tick
                )));
            }
            entry.1.push(r.delta);
        }
    }
    let rows = groups
        .into_iter()
        .map(|((algorithm, k), (tick, mut deltas))| {
            deltas.sort_by(f64::total_cmp);
            SummaryRow {
                algorithm,
                k,
                tick,
                runs: deltas.len(),
                mean: deltas.iter().sum::<f64>() / deltas.len() as f64,
                p05: percentile(&deltas, 0.05),
                p95: percentile(&deltas, 0.95),
            }
        })
        .collect();
    let mut thresholds = Vec::new();
    for (&algorithm, &count) in &runs {
        for &threshold in &DEFAULT_THRESHOLDS {
            let hits: Vec<Option<(u64, u64)>> = traces
                .iter()
                .filter(|t| t.algorithm == algorithm)
                .map(|t| first_hit(t, threshold))
                .collect();
            let ticks: Vec<Option<f64>> = hits.iter().map(|h| h.map(|(_, t)| t as f64)).collect();
            let ks: Vec<Option<f64>> = hits.iter().map(|h| h.map(|(k, _)| k as f64)).collect();
            thresholds.push(ThresholdRow {
                algorithm,
                threshold,
                runs: count,
                reached: hits.iter().flatten().count(),
                median_tick: median_with_infinity(&ticks),
                median_k: median_with_infinity(&ks),
            });
        }
    }
    Ok(Summary {
        config_hash: hash,
        rows,
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::TraceRecord;

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert!((percentile(&v, 0.05) - 1.45).abs() < 1e-12);
        assert!((percentile(&v, 0.95) - 9.55).abs() < 1e-12);
        assert_eq!(percentile(&[3.0], 0.05), 3.0);
    }

    #[test]
    fn median_treats_missing_as_infinite() {
        assert_eq!(median_with_infinity(&[Some(1.0), None, Some(3.0)]), Some(3.0));
        assert_eq!(median_with_infinity(&[Some(1.0), None]), None);
        assert_eq!(median_with_infinity(&[Some(1.0), Some(2.0), None, Some(5.0)]), Some(3.5));
    }

    fn trace(hash: &str, deltas: &[f64]) -> RunTrace {
        RunTrace {
            algorithm: Algorithm::Apd,
            seed: 0,
            config_hash: hash.into(),
            records: deltas
                .iter()
                .enumerate()
                .map(|(i, &delta)| TraceRecord {
                    k: i as u64,
                    tick: 2 * i as u64,
                    delta,
                    lambda: vec![0.0],
                    constraint: vec![0.0],
                    theta: vec![vec![0.0]],
                })
                .collect(),
            hits: Vec::new(),
        }
    }

    #[test]
    fn single_trace_band_collapses() {
        let s = summarize(&[trace("a", &[4.0, 0.5, 0.05, 0.001])]).unwrap();
        for r in &s.rows {
            assert_eq!((r.p05, r.p95), (r.mean, r.mean));
        }
        let t = s.threshold(Algorithm::Apd, 0.1).unwrap();
        assert_eq!((t.median_k, t.median_tick), (Some(2.0), Some(4.0)));
    }

    #[test]
    fn mixed_hashes_rejected() {
        let err = summarize(&[trace("a", &[1.0]), trace("b", &[1.0])]).unwrap_err();
        assert!(matches!(err, BenchError::MixedConfig { .. }));
        assert!(matches!(summarize(&[]), Err(BenchError::Empty)));
    }
}
