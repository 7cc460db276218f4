//! Random initial dispositions against the evenly spaced spectrum.

use scarcity::config::{Level, PInitMode};
use scarcity::harness::{run_sweep, SweepPlan};

fn main() -> scarcity::Result<()> {
    let levels = vec![Level::L2, Level::L4, Level::L5];
    let mut results = Vec::new();
    for mode in [PInitMode::Spectrum, PInitMode::Random] {
        let mut plan = SweepPlan::new(levels.clone(), vec![7]);
        plan.template.seeds = (0..10).collect();
        plan.p_init = Some(mode);
        results.push((mode, run_sweep(&plan)?));
    }

    println!("{:<6} {:>2} {:>10} {:>10}", "level", "C", "spectrum", "random");
    for &level in &levels {
        for c in 1..7 {
            let a = results[0].1.row(level, 7, c).expect("cell");
            let b = results[1].1.row(level, 7, c).expect("cell");
            println!("{:<6} {c:>2} {:>10.3} {:>10.3}", level.to_string(), a.overload_mean, b.overload_mean);
        }
    }
    Ok(())
}
