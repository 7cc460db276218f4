//! Does the tribal layer change overload? L5 against L4 on the same seeds,
//! paired t-test per capacity, for N = 7 and N = 15.

use scarcity::config::Level;
use scarcity::harness::{run_sweep, SweepPlan};

fn main() -> scarcity::Result<()> {
    let mut plan = SweepPlan::new(vec![Level::L4, Level::L5], vec![7, 15]);
    plan.template.seeds = (0..20).collect();
    plan.template.rounds = 300;
    let summary = run_sweep(&plan)?;

    println!("{:>3} {:>3} {:>7} {:>12} {:>7} {:>8} {:>10}", "N", "C", "C/N", "L5-L4 (pp)", "se", "t", "p");
    for r in &summary.paired {
        println!(
            "{:>3} {:>3} {:>7.3} {:>12.2} {:>7.2} {:>8.2} {:>10.2e} {}",
            r.n, r.capacity, r.c_over_n, r.mean_diff_pp, r.se_pp, r.t_stat, r.p_value, r.note
        );
    }
    Ok(())
}
