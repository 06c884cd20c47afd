//! Runs a shortened canned scenario, writes the CSV artifacts and reads the
//! traces back.

use asyncpd::bench::{load_artifacts, run_experiment, write_artifacts, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = ExperimentConfig::fig3();
    config.run.horizon = 5000;
    config.run.seeds = vec![0, 1, 2];
    let dir = std::env::temp_dir().join(format!("asyncpd-{}", config.hash()));
    let art = run_experiment(&config)?;
    for path in write_artifacts(&art, &dir)? {
        println!("wrote {}", path.display());
    }
    let back = load_artifacts(&dir)?;
    let same = back.iter().zip(&art.traces).all(|(a, b)| a.records == b.records);
    println!("{} traces read back, identical: {same}", back.len());
    for row in art.summary.rows.iter().filter(|r| r.k % 1000 == 0) {
        println!(
            "{:<5} k {:>5} tick {:>6}  mean {:.3e}  [{:.3e}, {:.3e}]",
            row.algorithm.label(),
            row.k,
            row.tick,
            row.mean,
            row.p05,
            row.p95
        );
    }
    Ok(())
}
