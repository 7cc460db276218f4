//! Closed-form overload baselines: exact binomial and its Gaussian
//! approximation for independent agents, and the Poisson-binomial overload of
//! a fixed disposition spectrum under a shared forecast.

use scarcity::analytics::{l1_rows, l2_overload_scan};
use scarcity::config::{initial_p_spectrum, PInitMode};
use scarcity::rng::{RngStream, StreamRole};

fn main() -> scarcity::Result<()> {
    let n = 7;
    let capacities: Vec<usize> = (1..n).collect();

    println!("independent agents, q = C/N");
    println!("{:>3} {:>10} {:>10}", "C", "binomial", "gaussian");
    let rows = l1_rows(n, &capacities, None)?;
    for pair in rows.chunks(2) {
        println!("{:>3} {:>10.4} {:>10.4}", pair[0].capacity, pair[0].overload, pair[1].overload);
    }

    // the spectrum does not touch the rng, any stream will do
    let ps = initial_p_spectrum(n, PInitMode::Spectrum, &mut RngStream::new(0, StreamRole::Init))?;
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    println!("\nspectrum p = {ps:.3?}, shared forecast p_llm = x, C = 2");
    println!("{:>5} {:>7} {:>9} {:>9}", "x", "E[A]", "Var[A]", "overload");
    for (x, pmf, overload) in l2_overload_scan(&ps, 2, &grid)? {
        println!("{x:>5.1} {:>7.3} {:>9.4} {overload:>9.4}", pmf.mean(), pmf.variance());
    }
    Ok(())
}
