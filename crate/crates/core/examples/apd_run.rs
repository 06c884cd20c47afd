//! A single APD run on the heterogeneous schedule, printing the error to the
//! saddle point as the iteration counter grows.

use asyncpd::engine::{BufferInit, DelayModel};
use asyncpd::model::{DualScaling, ProblemSpec};
use asyncpd::solvers::{run_apd, RunOptions, StepSizeRule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ProblemSpec::five_worker_allocation(10.0).with_dual_scaling(DualScaling::Unscaled);
    let delay = DelayModel::new(vec![4, 4, 3, 2, 1], 2, 1)?;
    let rule = StepSizeRule::Inverse { a0: 10.0, a1: 100.0 };
    let opts = RunOptions {
        checkpoint_stride: 2000,
        buffer_init: BufferInit::Synchronized,
        ..RunOptions::default()
    };
    let trace = run_apd(&spec, &delay, &rule, 0, 20_000, &opts)?;
    println!("{:>6} {:>6} {:>12} {:>8} {:>9}", "k", "tick", "delta", "lambda", "g(mean)");
    for r in &trace.records {
        println!(
            "{:>6} {:>6} {:>12.4e} {:>8.4} {:>9.4}",
            r.k, r.tick, r.delta, r.lambda[0], r.constraint[0]
        );
    }
    for h in &trace.hits {
        println!("delta <= {}: k {:?}, tick {:?}", h.threshold, h.k, h.tick);
    }
    Ok(())
}
