//! Weighted step-size series against its `(2/a) γ_k^p` bound for a few rules.

use asyncpd::analysis::aux_lemma_check;
use asyncpd::solvers::StepSizeRule;

fn main() {
    let rules = [
        ("1/(k+10)", StepSizeRule::Inverse { a0: 1.0, a1: 10.0 }),
        ("4/(k+10)", StepSizeRule::Inverse { a0: 4.0, a1: 10.0 }),
        ("0.5", StepSizeRule::Constant(0.5)),
        ("2.5", StepSizeRule::Constant(2.5)),
    ];
    for (name, rule) in rules {
        for p in [1, 2] {
            let r = aux_lemma_check(1.0, p, &rule, 1000);
            println!(
                "{name:<9} p={p}: max ratio {:>10.4e} at k={:<4} preconditions {:<5} bound holds {}",
                r.max_ratio,
                r.argmax,
                r.preconditions_hold(),
                r.holds()
            );
        }
    }
}
