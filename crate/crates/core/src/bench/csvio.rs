//! CSV artifacts. Floats are written with 17 significant digits so that
//! reading a file back reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::analysis::BoundCurve;
use crate::solvers::{Algorithm, RunTrace, TraceRecord};

use super::summary::Summary;
use super::BenchError;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, col: &str) -> Result<f64, BenchError> {
    field
        .parse()
        .map_err(|_| BenchError::Format(format!("column {col}: {field:?} is not a number")))
}

fn parse_u64(field: &str, col: &str) -> Result<u64, BenchError> {
    field
        .parse()
        .map_err(|_| BenchError::Format(format!("column {col}: {field:?} is not an integer")))
}

pub fn run_id(hash: &str, algorithm: Algorithm, seed: u64) -> String {
    format!("{hash}-{}-{seed}", algorithm.label())
}

/// Column names for `n` workers of dimension `d` and `m` constraints.
/// Scalar cases use `lambda`, `g_mean` and `theta_i`.
fn trace_header(n: usize, d: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["run_id", "seed", "algo", "k", "tick", "delta"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if m == 1 {
        h.push("lambda".into());
        h.push("g_mean".into());
    } else {
        h.extend((1..=m).map(|j| format!("lambda_{j}")));
        h.extend((1..=m).map(|j| format!("g_mean_{j}")));
    }
    for i in 1..=n {
        if d == 1 {
            h.push(format!("theta_{i}"));
        } else {
            h.extend((1..=d).map(|r| format!("theta_{i}_{r}")));
        }
    }
    h
}

fn shape(traces: &[RunTrace]) -> Result<(usize, usize, usize), BenchError> {
    let first = traces
        .first()
        .and_then(|t| t.records.first())
        .ok_or(BenchError::Empty)?;
    let n = first.theta.len();
    let d = first.theta.first().map_or(0, Vec::len);
    let m = first.lambda.len();
    let consistent = traces.iter().flat_map(|t| &t.records).all(|r| {
        r.theta.len() == n && r.theta.iter().all(|x| x.len() == d) && r.lambda.len() == m && r.constraint.len() == m
    });
    if !consistent {
        return Err(BenchError::Format("traces disagree on n, d or m".into()));
    }
    Ok((n, d, m))
}

pub fn write_traces<W: Write>(traces: &[RunTrace], out: W) -> Result<(), BenchError> {
    let (n, d, m) = shape(traces)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(n, d, m))?;
    for t in traces {
        let id = run_id(&t.config_hash, t.algorithm, t.seed);
        for r in &t.records {
            let mut row = vec![
                id.clone(),
                t.seed.to_string(),
                t.algorithm.label().to_string(),
                r.k.to_string(),
                r.tick.to_string(),
                fmt_f64(r.delta),
            ];
            row.extend(r.lambda.iter().map(|v| fmt_f64(*v)));
            row.extend(r.constraint.iter().map(|v| fmt_f64(*v)));
            row.extend(r.theta.iter().flatten().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn infer_shape(header: &csv::StringRecord) -> Result<(usize, usize, usize), BenchError> {
    let cols: Vec<&str> = header.iter().collect();
    let fixed = ["run_id", "seed", "algo", "k", "tick", "delta"];
    if cols.len() < fixed.len() || cols[..fixed.len()] != fixed {
        return Err(BenchError::Format(format!("unexpected trace header {cols:?}")));
    }
    let m = if cols.get(6) == Some(&"lambda") {
        1
    } else {
        cols.iter().filter(|c| c.starts_with("lambda_")).count()
    };
    let thetas: Vec<&&str> = cols.iter().filter(|c| c.starts_with("theta_")).collect();
    let d = if thetas.iter().any(|c| c.matches('_').count() == 2) {
        thetas.iter().filter(|c| c.starts_with("theta_1_")).count()
    } else {
        1
    };
    let n = thetas.len().checked_div(d).unwrap_or(0);
    if m == 0 || n == 0 || cols != trace_header(n, d, m) {
        return Err(BenchError::Format(format!("unexpected trace header {cols:?}")));
    }
    Ok((n, d, m))
}

/// Parses a traces file. Threshold hits are not stored in the file and come
/// back empty.
pub fn read_traces<R: Read>(input: R) -> Result<Vec<RunTrace>, BenchError> {
    let mut rdr = csv::Reader::from_reader(input);
    let (n, d, m) = infer_shape(rdr.headers()?)?;
    let mut traces: Vec<RunTrace> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let id = &row[0];
        let seed = parse_u64(&row[1], "seed")?;
        let algorithm = Algorithm::from_label(&row[2])
            .ok_or_else(|| BenchError::Format(format!("unknown algorithm {:?}", &row[2])))?;
        let suffix = format!("-{}-{seed}", algorithm.label());
        let hash = id
            .strip_suffix(&suffix)
            .ok_or_else(|| BenchError::Format(format!("run_id {id:?} does not end in {suffix:?}")))?;
        let mut col = 6;
        let mut take = |count: usize, name: &str| -> Result<Vec<f64>, BenchError> {
            let v = (col..col + count).map(|c| parse_f64(&row[c], name)).collect();
            col += count;
            v
        };
        let lambda = take(m, "lambda")?;
        let constraint = take(m, "g_mean")?;
        let flat = take(n * d, "theta")?;
        let record = TraceRecord {
            k: parse_u64(&row[3], "k")?,
            tick: parse_u64(&row[4], "tick")?,
            delta: parse_f64(&row[5], "delta")?,
            lambda,
            constraint,
            theta: flat.chunks(d).map(<[f64]>::to_vec).collect(),
        };
        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            traces.push(RunTrace {
                algorithm,
                seed,
                config_hash: hash.to_string(),
                records: Vec::new(),
                hits: Vec::new(),
            });
            traces.len() - 1
        });
        traces[slot].records.push(record);
    }
    Ok(traces)
}

pub fn write_summary<W: Write>(summary: &Summary, out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config_hash", "algo", "k", "tick", "runs", "mean_delta", "p05_delta", "p95_delta"])?;
    for r in &summary.rows {
        w.write_record([
            summary.config_hash.clone(),
            r.algorithm.label().to_string(),
            r.k.to_string(),
            r.tick.to_string(),
            r.runs.to_string(),
            fmt_f64(r.mean),
            fmt_f64(r.p05),
            fmt_f64(r.p95),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Median tick and counter to reach each threshold; empty when fewer than
/// half of the runs reached it.
pub fn write_thresholds<W: Write>(summary: &Summary, out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config_hash", "algo", "threshold", "runs", "reached", "median_tick", "median_k"])?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in &summary.thresholds {
        w.write_record([
            summary.config_hash.clone(),
            r.algorithm.label().to_string(),
            fmt_f64(r.threshold),
            r.runs.to_string(),
            r.reached.to_string(),
            opt(r.median_tick),
            opt(r.median_k),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bound<W: Write>(hash: &str, curve: &BoundCurve, out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config_hash", "k", "bound", "applicable"])?;
    for (k, v) in &curve.points {
        w.write_record([hash.to_string(), k.to_string(), fmt_f64(*v), curve.applicable.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `config_hash` column of any artifact except traces.
pub fn read_config_hashes<R: Read>(input: R) -> Result<Vec<String>, BenchError> {
    let mut rdr = csv::Reader::from_reader(input);
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == "config_hash")
        .ok_or_else(|| BenchError::Format("no config_hash column".into()))?;
    let mut out: Vec<String> = Vec::new();
    for row in rdr.records() {
        let h = row?[col].to_string();
        if !out.contains(&h) {
            out.push(h);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(seed: u64, d: usize) -> RunTrace {
        let rec = |k: u64, x: f64| TraceRecord {
            k,
            tick: 3 * k,
            delta: x * x,
            lambda: vec![x / 3.0],
            constraint: vec![-x],
            theta: vec![vec![x; d], vec![1.0 / (x + 7.0); d]],
        };
        RunTrace {
            algorithm: Algorithm::Apd,
            seed,
            config_hash: "00ff00ff00ff00ff".into(),
            records: vec![rec(0, 0.1), rec(10, 1.0 / 3.0), rec(20, -2.5e-300)],
            hits: Vec::new(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for d in [1, 3] {
            let traces = vec![trace(4, d), trace(9, d)];
            let mut buf = Vec::new();
            write_traces(&traces, &mut buf).unwrap();
            assert_eq!(read_traces(buf.as_slice()).unwrap(), traces);
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_traces(&[trace(0, 1)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "run_id,seed,algo,k,tick,delta,lambda,g_mean,theta_1,theta_2"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("00ff00ff00ff00ff-apd-0,0,apd,0,0,"));
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
