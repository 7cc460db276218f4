//! Forecaster-driven agents competing for a finite shared resource.
//!
//! Each round every agent receives a forecast of next-round demand, reduces it
//! to the probability that demand stays within capacity, filters that through
//! its disposition `p`, and flips a biased coin to decide whether to access the
//! resource. Rewards are a symmetric ±1 depending on whether the round
//! overloaded. The crate covers a five-level ladder of population
//! sophistication:
//!
//! | Level | Label   | Forecasters | Adaptive `p` | Tribes |
//! |-------|---------|-------------|--------------|--------|
//! | L1    | IID     | none (q = C/N) | no        | no     |
//! | L2    | Null    | one shared  | yes          | no     |
//! | L3    | Diverse | per agent   | no           | no     |
//! | L4    | FRD     | per agent   | yes          | no     |
//! | L5    | LOTF    | per agent   | yes          | yes    |
//!
//! Modules:
//! - [`config`]: level configuration, validation and initial dispositions
//! - [`rng`]: seeded, splittable random streams
//! - [`forecast`]: demand forecasters (synthetic and remote) and prompt rendering
//! - [`engine`]: the round loop, payoffs and adaptation
//! - [`tribes`]: loyalty, defection and the conch ramp for L5
//! - [`analytics`]: exact and approximate overload baselines
//! - [`stats`]: cross-seed aggregation and paired t-tests
//! - [`harness`]: capacity sweeps, output files and the command line
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod analytics;
pub mod config;
pub mod engine;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod rng;
pub mod stats;
pub mod tribes;

pub use config::{AdaptRule, ForecasterKind, Level, LevelConfig, PInitMode};
pub use engine::{simulate, AgentState, EpisodeResult, RoundRecord};
pub use error::{Error, Result};
