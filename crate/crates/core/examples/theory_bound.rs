//! Convergence-bound constants for the heterogeneous schedule, step-size
//! checks for two rules, and the bound against a Monte Carlo mean.

use asyncpd::analysis::theorem_bound;
use asyncpd::bench::{run_experiment, validate_config, ExperimentConfig, StepSizeConfig};
use asyncpd::solvers::Algorithm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inverse = ExperimentConfig::fig2();
    let r = validate_config(&inverse)?;
    let b = r.bound.expect("window exists");
    println!("constants: mu {:e}, L {:.3}, p {}, B {}, tau {}", r.constants.monotonicity, r.constants.lipschitz, b.p, b.window, r.assumptions.max_staleness);
    println!("C1 {:.4e}  C2 {:.4e}  C3 {:.4e}  C4 {:.4e}  total {:.4e}", b.c1, b.c2, b.c3, b.c4, b.total);
    let s = r.stepsize.expect("window exists");
    println!("a0/(a1+k): first violation at k = {:?}", s.first_violation());

    let mut constant = ExperimentConfig::fig2();
    constant.stepsize = StepSizeConfig::Constant { gamma: 0.01 };
    constant.run.seeds = (0..30).collect();
    constant.run.algorithms = vec!["apd".into()];
    let art = run_experiment(&constant)?;
    let consts = art.validation.bound.expect("window exists");
    println!("constant 0.01: conditions pass = {}", art.validation.stepsize_passed());
    let rows: Vec<_> = art.summary.rows_for(Algorithm::Apd).collect();
    let delta0 = rows[0].mean;
    for r in rows.iter().step_by(40).skip(1) {
        let bound = theorem_bound(r.k - 1, delta0, &consts, &constant.rule());
        println!("  k {:>6}: mean delta {:.4e} <= bound {:.4e}", r.k, r.mean, bound);
    }
    Ok(())
}
