//! A single tribal (L5) episode: how the one starting tribe splits, where the
//! partition settles, and the membership timeline as CSV.

use scarcity::config::{Level, LevelConfig};
use scarcity::engine::simulate;
use scarcity::tribes::{format_partition, membership_timeline, modal_partition, partition_variance_cap};

fn main() -> scarcity::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = LevelConfig::new(Level::L5, 7, 2);
    let ep = simulate(&cfg, seed)?;

    let mut last = String::new();
    for r in &ep.records {
        let part = format_partition(&r.partition);
        if part != last {
            println!("round {:>3}  conch {:.3}  partition {part}", r.round_index, r.conch_level);
            last = part;
        }
        if let Some(m) = &r.marker {
            println!("round {:>3}  {m}", r.round_index);
        }
    }

    let modal = modal_partition(&ep.records, ep.warmup).expect("rounds after warm-up");
    println!(
        "\nmodal partition {} (sum of squares {}), overload {:.3}",
        format_partition(&modal),
        partition_variance_cap(&modal),
        ep.overload_rate
    );

    let timeline = membership_timeline(&ep.records)?;
    println!("membership settles from round {}", timeline.settled_from());
    let labels: Vec<String> = ep.final_agents.iter().map(|a| a.label.clone()).collect();
    let mut csv = Vec::new();
    timeline.write_csv(&labels, &mut csv)?;
    let text = String::from_utf8(csv).expect("csv is utf-8");
    println!("\nfirst rows of the membership file:");
    for line in text.lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
