//! Loading a cell from JSON, and what validation reports for a bad one.

use scarcity::config::LevelConfig;
use scarcity::engine::simulate;
use scarcity::Error;

const GOOD: &str = r#"{
  "level": 5,
  "n_agents": 7,
  "capacity": 3,
  "rounds": 300,
  "seeds": [0, 1, 2],
  "forecaster_kind": {"empirical": {"smoothing": 0.5}},
  "conch_max": 0.6
}"#;

const BAD: &str = r#"{"level": 3, "n_agents": 7, "capacity": 9, "adaptation_step": -1, "p_init_mode": "random"}"#;

fn main() -> scarcity::Result<()> {
    let cfg = LevelConfig::from_json(GOOD)?.validated()?;
    for &seed in &cfg.seeds {
        let ep = simulate(&cfg, seed)?;
        println!("seed {seed}: overload {:.3}", ep.overload_rate);
    }
    println!("\nfull config with defaults:\n{}", cfg.to_json());

    match LevelConfig::from_json(BAD)?.validated() {
        Err(Error::InvalidConfig(violations)) => {
            println!("\nrejected, requirements not met:");
            for v in violations {
                println!("  {v}");
            }
        }
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}
