//! APD against the barrier-synchronized baseline on the same tick clock, with
//! and without a straggler. Both see the same sample streams.

use asyncpd::bench::{summarize, ExperimentConfig};
use asyncpd::solvers::Algorithm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, config) in [("v = [4,4,3,2,1]", ExperimentConfig::fig2()), ("v = [10,4,3,2,1]", ExperimentConfig::fig3())] {
        let summary = summarize(&asyncpd::bench::run_traces(&config)?)?;
        println!("{name}, {} seeds", config.run.seeds.len());
        for threshold in [1.0, 0.1, 0.01] {
            let show = |a| {
                let t = summary.threshold(a, threshold).unwrap();
                match t.median_tick {
                    Some(v) => format!("{v:>8.1} ({}/{})", t.reached, t.runs),
                    None => format!("{:>8} ({}/{})", "-", t.reached, t.runs),
                }
            };
            println!(
                "  median ticks to delta <= {threshold:<5} APD {}  Sync-PD {}",
                show(Algorithm::Apd),
                show(Algorithm::SyncPd)
            );
        }
    }
    Ok(())
}
