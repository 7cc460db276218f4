//! Handing the engine your own forecaster bindings instead of the level
//! defaults: here a population split between pessimists and a uniform
//! forecaster.

use scarcity::config::{Level, LevelConfig};
use scarcity::engine::run_episode;
use scarcity::forecast::{Backend, DemandDistribution, ForecasterBinding};
use scarcity::tribes::TribeParams;

fn main() -> scarcity::Result<()> {
    let n = 7;
    let cfg = LevelConfig::new(Level::L5, n, 3);

    // pessimists expect everyone to show up
    let mut crowded = vec![0.0; n + 1];
    crowded[n] = 1.0;
    let pessimist = Backend::Fixed(DemandDistribution::new(crowded)?);

    let bindings: Vec<ForecasterBinding> = (0..n)
        .map(|i| ForecasterBinding::new(if i < 3 { pessimist.clone() } else { Backend::Uniform }))
        .collect();

    let ep = run_episode(&cfg, 1, &bindings, Some(TribeParams::default()))?;
    println!("overload {:.3}", ep.overload_rate);
    for a in &ep.final_agents {
        println!(
            "agent {} ({}): p {:.2} -> {:.2}, win rate {:.3}, tribe {:?}",
            a.agent_id, a.label, a.p_initial, a.p, ep.win_rate_per_agent[a.agent_id], a.tribe_id
        );
    }
    Ok(())
}
