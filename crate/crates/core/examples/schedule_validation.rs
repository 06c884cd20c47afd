//! Event timeline of a small schedule, its staleness and activation window,
//! and the report for a schedule with a halted worker.

use asyncpd::engine::{build_schedule, validate_assumptions, DelayModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schedule = build_schedule(&DelayModel::new(vec![2, 1], 1, 1)?, 12)?;
    schedule.write_event_log(std::io::stdout().lock())?;

    for (label, delay) in [
        ("v = [4,4,3,2,1]", DelayModel::new(vec![4, 4, 3, 2, 1], 2, 1)?),
        ("v = [10,4,3,2,1]", DelayModel::new(vec![10, 4, 3, 2, 1], 2, 1)?),
        ("worker 2 halted", DelayModel::with_halted(vec![Some(4), None, Some(3), Some(2), Some(1)], 2, 1)?),
    ] {
        let r = validate_assumptions(&build_schedule(&delay, 5000)?);
        println!("\n{label}");
        println!("  staleness: buffer {}, broadcast {}", r.buffer_staleness, r.broadcast_staleness);
        println!("  window (p, B): {:?}", r.window.map(|w| (w.p, w.b)));
        println!("  strict window: {:?}", r.strict_window.map(|w| (w.p, w.b)));
        for v in &r.violations {
            println!("  violation: {v}");
        }
    }
    Ok(())
}
