//! Saddle point of the five-worker allocation instance under both coupling
//! scalings, checked against the affine-quadratic closed form.

use asyncpd::analysis::{closed_form_saddle, iterative_saddle, kkt_residual, saddle_oracle, DEFAULT_SADDLE_TOLERANCE};
use asyncpd::model::{DualScaling, ProblemSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (lambda_max, scaling) in [
        (100.0, DualScaling::Averaged),
        (100.0, DualScaling::Unscaled),
        (10.0, DualScaling::Unscaled),
    ] {
        let spec = ProblemSpec::five_worker_allocation(lambda_max).with_dual_scaling(scaling);
        let sp = saddle_oracle(&spec, DEFAULT_SADDLE_TOLERANCE)?;
        let theta: Vec<f64> = sp.theta.iter().map(|t| t[0]).collect();
        println!("{scaling:?}, lambda in [0, {lambda_max}]  ({:?})", sp.method);
        println!("  theta*  = {theta:.4?}");
        println!("  lambda* = {:.4}", sp.lambda[0]);
        println!("  KKT residual {:.1e}", kkt_residual(&spec, &sp.theta, &sp.lambda)?);

        let iter = iterative_saddle(&spec, 1e-12)?;
        println!("  iterative solve agrees to {:.1e}", (iter.lambda[0] - sp.lambda[0]).abs());
        match closed_form_saddle(&spec) {
            Some((_, l)) if spec.dual_box().contains(&l) => println!("  closed form lambda {:.4}", l[0]),
            Some((_, l)) => println!("  closed form lambda {:.4} lies outside the dual box", l[0]),
            None => println!("  no closed form"),
        }
    }
    Ok(())
}
