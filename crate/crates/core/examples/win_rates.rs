//! Win rate by disposition class at each capacity for the adaptive levels.

use scarcity::config::Level;
use scarcity::harness::{run_sweep, SweepPlan};

fn main() -> scarcity::Result<()> {
    let mut plan = SweepPlan::new(vec![Level::L2, Level::L4, Level::L5], vec![7]);
    plan.template.seeds = (0..10).collect();
    let summary = run_sweep(&plan)?;

    println!("{:<8} {:>2} {:<14} {:>6} {:>6}", "level", "C", "class", "mean", "se");
    for row in &summary.rows {
        for w in &row.win_rates {
            println!(
                "{:<8} {:>2} {:<14} {:>6.3} {:>6.3}",
                row.level.label(),
                row.capacity,
                w.class.name(),
                w.mean,
                w.se
            );
        }
    }
    Ok(())
}
