//! Overload rate of every level across capacities, plus the crossover point
//! where adaptive diverse agents stop beating the independent baseline.
//!
//! ```text
//! cargo run --release --example technology_ladder -- [seeds] [n]
//! ```

use scarcity::analytics::crossover_estimate;
use scarcity::config::Level;
use scarcity::harness::{run_sweep, SweepPlan};

fn main() -> scarcity::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let levels = vec![Level::L1, Level::L2, Level::L3, Level::L4, Level::L5];
    let mut plan = SweepPlan::new(levels.clone(), vec![n]);
    plan.template.seeds = (0..seeds).collect();
    let summary = run_sweep(&plan)?;

    print!("{:>6}", "C/N");
    for l in &levels {
        print!("  {:>13}", format!("{l} {}", l.label()));
    }
    println!("  {:>8}", "exact L1");
    for c in plan.capacities(n) {
        print!("{:>6.3}", c as f64 / n as f64);
        for &l in &levels {
            let r = summary.row(l, n, c).expect("every cell ran");
            print!("  {:>6.3} ±{:.3}", r.overload_mean, r.overload_se);
        }
        let exact = summary.analytic.iter().find(|a| a.n == n && (a.c_over_n - c as f64 / n as f64).abs() < 1e-12);
        println!("  {:>8.3}", exact.map_or(f64::NAN, |a| a.mean));
    }

    match crossover_estimate(&summary.curves(n))? {
        Some(x) => println!("\nL4 overtakes L1 above C/N ≈ {x:.3}"),
        None => println!("\nno sign change between L4 and L1"),
    }
    Ok(())
}
