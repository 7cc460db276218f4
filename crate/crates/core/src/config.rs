//! Level configuration, validation and initial dispositions.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::DemandDistribution;
use crate::rng::RngStream;
use crate::tribes::TribeParams;

/// Rung of the technology ladder. Deserializes from `"L4"` or `4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "LevelRepr")]
pub enum Level {
    L1,
    L2,
    L3,
    L4,
    L5,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LevelRepr {
    Number(u8),
    Name(String),
}

impl TryFrom<LevelRepr> for Level {
    type Error = String;

    fn try_from(r: LevelRepr) -> std::result::Result<Self, String> {
        let n = match &r {
            LevelRepr::Number(n) => Some(*n),
            LevelRepr::Name(s) => s.strip_prefix('L').and_then(|d| d.parse().ok()),
        };
        n.and_then(Level::from_number).ok_or_else(|| match r {
            LevelRepr::Number(n) => format!("no level {n}"),
            LevelRepr::Name(s) => format!("no level {s:?}"),
        })
    }
}

impl Level {
    pub const ALL: [Level; 5] = [Level::L1, Level::L2, Level::L3, Level::L4, Level::L5];

    pub fn from_number(n: u8) -> Option<Level> {
        match n {
            1 => Some(Level::L1),
            2 => Some(Level::L2),
            3 => Some(Level::L3),
            4 => Some(Level::L4),
            5 => Some(Level::L5),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn label(self) -> &'static str {
        match self {
            Level::L1 => "IID",
            Level::L2 => "Null",
            Level::L3 => "Diverse",
            Level::L4 => "FRD",
            Level::L5 => "LOTF",
        }
    }

    /// Whether `p` adapts through reinforcement.
    pub fn adapts(self) -> bool {
        matches!(self, Level::L2 | Level::L4 | Level::L5)
    }

    /// Whether every agent consults one identical forecaster.
    pub fn shared_forecaster(self) -> bool {
        matches!(self, Level::L1 | Level::L2)
    }

    pub fn has_tribes(self) -> bool {
        self == Level::L5
    }

    /// Levels whose dispositions are pinned at `p = 1`.
    pub fn fixed_p(self) -> bool {
        matches!(self, Level::L1 | Level::L3)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PInitMode {
    /// Evenly spaced from 1 down to 0.
    Spectrum,
    /// Independent uniform draws.
    Random,
    AllOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptRule {
    /// Perturb `p` only after a losing round.
    #[default]
    PerturbOnLoss,
    AlwaysPerturb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    Uniform,
    Fixed(Vec<f64>),
    Empirical {
        smoothing: f64,
    },
    Remote {
        /// `host:port`; falls back to `SCARCITY_LLM_ENDPOINT` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<String>,
    },
}

impl Default for ForecasterKind {
    fn default() -> Self {
        ForecasterKind::Empirical { smoothing: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub level: Level,
    pub n_agents: usize,
    pub capacity: usize,
    #[serde(default = "defaults::rounds")]
    pub rounds: usize,
    #[serde(default = "defaults::warmup")]
    pub warmup: usize,
    #[serde(default = "defaults::seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "defaults::history_window")]
    pub history_window: usize,
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
    #[serde(default = "defaults::adaptation_step")]
    pub adaptation_step: f64,
    #[serde(default)]
    pub adapt_rule: AdaptRule,
    #[serde(default = "defaults::conch_duration")]
    pub conch_duration: usize,
    #[serde(default = "defaults::conch_max")]
    pub conch_max: f64,
    #[serde(default)]
    pub forecaster_kind: ForecasterKind,
    /// `None` selects the level's default (all_one for L1/L3, spectrum otherwise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_init_mode: Option<PInitMode>,
    #[serde(default)]
    pub tribes: TribeParams,
}

mod defaults {
    pub fn rounds() -> usize {
        500
    }
    pub fn warmup() -> usize {
        50
    }
    pub fn seeds() -> Vec<u64> {
        super::default_seeds(20)
    }
    pub fn history_window() -> usize {
        10
    }
    pub fn temperature() -> f64 {
        1.0
    }
    pub fn adaptation_step() -> f64 {
        0.05
    }
    pub fn conch_duration() -> usize {
        250
    }
    pub fn conch_max() -> f64 {
        0.80
    }
}

/// The first `count` seeds of the default seed list.
pub fn default_seeds(count: usize) -> Vec<u64> {
    (0..count as u64).collect()
}

impl LevelConfig {
    /// Defaults for every numeric parameter: 500 rounds, 50 warm-up, 20 seeds,
    /// window 10, T = 1, step 0.05, conch 0.80 over 250 rounds.
    pub fn new(level: Level, n_agents: usize, capacity: usize) -> Self {
        Self {
            level,
            n_agents,
            capacity,
            rounds: defaults::rounds(),
            warmup: defaults::warmup(),
            seeds: defaults::seeds(),
            history_window: defaults::history_window(),
            temperature: defaults::temperature(),
            adaptation_step: defaults::adaptation_step(),
            adapt_rule: AdaptRule::default(),
            conch_duration: defaults::conch_duration(),
            conch_max: defaults::conch_max(),
            forecaster_kind: ForecasterKind::default(),
            p_init_mode: None,
            tribes: TribeParams::default(),
        }
    }

    pub fn effective_p_init(&self) -> PInitMode {
        match self.p_init_mode {
            Some(mode) => mode,
            None if self.level.fixed_p() => PInitMode::AllOne,
            None => PInitMode::Spectrum,
        }
    }

    /// Every violated invariant, in a stable order.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut v = Vec::new();
        if self.n_agents < 2 {
            v.push(Violation::TooFewAgents(self.n_agents));
        }
        if self.capacity == 0 {
            v.push(Violation::ZeroCapacity);
        }
        if self.capacity >= self.n_agents {
            v.push(Violation::CapacityNotBelowAgents {
                capacity: self.capacity,
                n_agents: self.n_agents,
            });
        }
        if self.rounds == 0 {
            v.push(Violation::ZeroRounds);
        }
        if self.warmup >= self.rounds {
            v.push(Violation::WarmupNotBelowRounds {
                warmup: self.warmup,
                rounds: self.rounds,
            });
        }
        if self.seeds.is_empty() {
            v.push(Violation::NoSeeds);
        } else {
            let mut sorted = self.seeds.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                v.push(Violation::DuplicateSeeds);
            }
        }
        if self.history_window == 0 {
            v.push(Violation::ZeroHistoryWindow);
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            v.push(Violation::Temperature(self.temperature));
        }
        if !(self.adaptation_step > 0.0 && self.adaptation_step <= 1.0) {
            v.push(Violation::AdaptationStep(self.adaptation_step));
        }
        if self.conch_duration == 0 {
            v.push(Violation::ZeroConchDuration);
        }
        if !(0.0..=1.0).contains(&self.conch_max) {
            v.push(Violation::ConchMax(self.conch_max));
        }
        if self.level.fixed_p() && self.effective_p_init() != PInitMode::AllOne {
            v.push(Violation::FixedPLevel(self.level));
        }
        match &self.forecaster_kind {
            ForecasterKind::Fixed(probs) => {
                if probs.len() != self.n_agents + 1 {
                    v.push(Violation::FixedForecaster(format!(
                        "expected {} entries, got {}",
                        self.n_agents + 1,
                        probs.len()
                    )));
                } else if let Err(e) = DemandDistribution::new(probs.clone()) {
                    v.push(Violation::FixedForecaster(e.to_string()));
                }
            }
            ForecasterKind::Empirical { smoothing } if smoothing.is_nan() || *smoothing < 0.0 => {
                v.push(Violation::Smoothing(*smoothing));
            }
            _ => {}
        }
        if let Err(msg) = self.tribes.check() {
            v.push(Violation::TribeParams(msg));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn validated(self) -> Result<Self> {
        self.validate().map_err(Error::InvalidConfig)?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One broken invariant of a [`LevelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewAgents(usize),
    ZeroCapacity,
    CapacityNotBelowAgents { capacity: usize, n_agents: usize },
    ZeroRounds,
    WarmupNotBelowRounds { warmup: usize, rounds: usize },
    NoSeeds,
    DuplicateSeeds,
    ZeroHistoryWindow,
    Temperature(f64),
    AdaptationStep(f64),
    ZeroConchDuration,
    ConchMax(f64),
    FixedPLevel(Level),
    FixedForecaster(String),
    Smoothing(f64),
    TribeParams(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewAgents(n) => write!(f, "n_agents >= 2 (got {n})"),
            Violation::ZeroCapacity => f.write_str("capacity >= 1"),
            Violation::CapacityNotBelowAgents { capacity, n_agents } => {
                write!(f, "capacity < n_agents (capacity {capacity}, n_agents {n_agents})")
            }
            Violation::ZeroRounds => f.write_str("rounds >= 1"),
            Violation::WarmupNotBelowRounds { warmup, rounds } => {
                write!(f, "warmup < rounds (warmup {warmup}, rounds {rounds})")
            }
            Violation::NoSeeds => f.write_str("at least one seed"),
            Violation::DuplicateSeeds => f.write_str("seeds must be distinct"),
            Violation::ZeroHistoryWindow => f.write_str("history_window >= 1"),
            Violation::Temperature(t) => write!(f, "temperature > 0 (got {t})"),
            Violation::AdaptationStep(s) => write!(f, "adaptation_step in (0, 1] (got {s})"),
            Violation::ZeroConchDuration => f.write_str("conch_duration >= 1"),
            Violation::ConchMax(c) => write!(f, "conch_max in [0, 1] (got {c})"),
            Violation::FixedPLevel(level) => {
                write!(f, "{level} forces p=1 (p_init_mode must be all_one)")
            }
            Violation::FixedForecaster(msg) => write!(f, "fixed forecaster: {msg}"),
            Violation::Smoothing(s) => write!(f, "empirical smoothing >= 0 (got {s})"),
            Violation::TribeParams(msg) => write!(f, "tribes: {msg}"),
        }
    }
}

/// Initial dispositions for `n_agents` agents.
///
/// Spectrum mode spaces values evenly from 1 down to 0, so seven agents get
/// 1, 5/6, 4/6, ..., 0.
pub fn initial_p_spectrum(n_agents: usize, mode: PInitMode, rng: &mut RngStream) -> Result<Vec<f64>> {
    if n_agents < 2 {
        return Err(Error::InvalidConfig(vec![Violation::TooFewAgents(n_agents)]));
    }
    let last = (n_agents - 1) as f64;
    Ok(match mode {
        PInitMode::Spectrum => (0..n_agents).map(|i| (n_agents - 1 - i) as f64 / last).collect(),
        PInitMode::AllOne => vec![1.0; n_agents],
        PInitMode::Random => (0..n_agents).map(|_| rng.uniform()).collect(),
    })
}

const ROSTER7: [(&str, &str); 7] = [
    ("GPT-2 (dup)", "gpt2"),
    ("GPT-2 (base)", "gpt2"),
    ("GPT-2-medium", "gpt2-medium"),
    ("OPT-350M", "opt-350m"),
    ("OPT-125M", "opt-125m"),
    ("Pythia-160M", "pythia-160m"),
    ("Pythia-410M", "pythia-410m"),
];

/// Model ids the remote forecaster server knows.
pub const MODELS: [&str; 6] = [
    "gpt2",
    "gpt2-medium",
    "opt-350m",
    "opt-125m",
    "pythia-160m",
    "pythia-410m",
];

/// `(label, model id)` for each agent. Seven agents get the named roster;
/// other sizes cycle through [`MODELS`].
pub fn roster(n_agents: usize) -> Vec<(String, String)> {
    if n_agents == ROSTER7.len() {
        return ROSTER7
            .iter()
            .map(|(l, m)| (l.to_string(), m.to_string()))
            .collect();
    }
    (0..n_agents)
        .map(|i| {
            let model = MODELS[i % MODELS.len()];
            (format!("{model}#{i}"), model.to_string())
        })
        .collect()
}

/// Disposition class of an agent, from its initial `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DispositionClass {
    Follower,
    Moderate,
    Agnostic,
    AntiFollower,
}

impl DispositionClass {
    pub const ALL: [DispositionClass; 4] = [
        DispositionClass::Follower,
        DispositionClass::Moderate,
        DispositionClass::Agnostic,
        DispositionClass::AntiFollower,
    ];

    /// Followers sit above 0.75, anti-followers below 0.25, agnostics at 0.5.
    /// On the seven-agent spectrum this gives 2 / 2 / 1 / 2.
    pub fn of(p0: f64) -> Self {
        if p0 > 0.75 {
            DispositionClass::Follower
        } else if p0 < 0.25 {
            DispositionClass::AntiFollower
        } else if (p0 - 0.5).abs() < 1e-9 {
            DispositionClass::Agnostic
        } else {
            DispositionClass::Moderate
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DispositionClass::Follower => "follower",
            DispositionClass::Moderate => "moderate",
            DispositionClass::Agnostic => "agnostic",
            DispositionClass::AntiFollower => "anti-follower",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRole;

    fn rng() -> RngStream {
        RngStream::new(0, StreamRole::Init)
    }

    #[test]
    fn spectrum_of_seven_matches_roster_to_two_places() {
        let p = initial_p_spectrum(7, PInitMode::Spectrum, &mut rng()).unwrap();
        let rounded: Vec<f64> = p.iter().map(|x| (x * 100.0).round() / 100.0).collect();
        assert_eq!(rounded, vec![1.00, 0.83, 0.67, 0.50, 0.33, 0.17, 0.00]);
        assert_eq!(p[1], 5.0 / 6.0);
    }

    #[test]
    fn spectrum_endpoints_and_all_one() {
        assert_eq!(
            initial_p_spectrum(2, PInitMode::Spectrum, &mut rng()).unwrap(),
            vec![1.0, 0.0]
        );
        assert_eq!(
            initial_p_spectrum(7, PInitMode::AllOne, &mut rng()).unwrap(),
            vec![1.0; 7]
        );
    }

    #[test]
    fn spectrum_rejects_single_agent() {
        assert!(matches!(
            initial_p_spectrum(1, PInitMode::Spectrum, &mut rng()),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn random_mode_is_seeded_and_in_range() {
        let a = initial_p_spectrum(11, PInitMode::Random, &mut rng()).unwrap();
        let b = initial_p_spectrum(11, PInitMode::Random, &mut rng()).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| (0.0..1.0).contains(p)));
    }

    #[test]
    fn spectrum_is_symmetric_under_complement_and_reversal() {
        for n in 2..40 {
            let p = initial_p_spectrum(n, PInitMode::Spectrum, &mut rng()).unwrap();
            for i in 0..n {
                assert!((p[i] - (1.0 - p[n - 1 - i])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn default_l5_is_valid() {
        assert_eq!(LevelConfig::new(Level::L5, 7, 2).validate(), Ok(()));
    }

    #[test]
    fn capacity_at_population_is_rejected() {
        let errs = LevelConfig::new(Level::L1, 7, 7).validate().unwrap_err();
        assert!(errs.iter().any(|v| v.to_string().contains("capacity < n_agents")));
    }

    #[test]
    fn l3_with_spectrum_is_rejected() {
        let mut cfg = LevelConfig::new(Level::L3, 7, 2);
        cfg.p_init_mode = Some(PInitMode::Spectrum);
        let errs = cfg.validate().unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].to_string().contains("L3 forces p=1"));
    }

    #[test]
    fn validation_reports_every_violation() {
        let mut cfg = LevelConfig::new(Level::L1, 7, 9);
        cfg.warmup = 600;
        cfg.temperature = 0.0;
        cfg.seeds = vec![1, 1];
        let errs = cfg.validate().unwrap_err();
        assert_eq!(errs.len(), 4, "{errs:?}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"level":"L4","n_agents":7,"capacity":3,"colour":"red"}"#;
        assert!(LevelConfig::from_json(text).is_err());
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = LevelConfig::from_json(r#"{"level":"L3","n_agents":7,"capacity":3}"#).unwrap();
        assert_eq!(cfg.rounds, 500);
        assert_eq!(cfg.seeds.len(), 20);
        assert_eq!(cfg.effective_p_init(), PInitMode::AllOne);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn serialization_is_a_fixed_point() {
        let mut cfg = LevelConfig::new(Level::L5, 11, 4);
        cfg.forecaster_kind = ForecasterKind::Remote {
            endpoint: Some("127.0.0.1:9000".into()),
        };
        cfg.p_init_mode = Some(PInitMode::Random);
        let once = cfg.to_json();
        let parsed = LevelConfig::from_json(&once).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.to_json(), once);
    }

    #[test]
    fn roster_classes_follow_labels() {
        let p = initial_p_spectrum(7, PInitMode::Spectrum, &mut rng()).unwrap();
        let classes: Vec<_> = p.iter().map(|&x| DispositionClass::of(x)).collect();
        use DispositionClass::*;
        assert_eq!(
            classes,
            vec![Follower, Follower, Moderate, Agnostic, Moderate, AntiFollower, AntiFollower]
        );
        let r = roster(7);
        assert_eq!(r[0].1, r[1].1);
        assert_ne!(r[0].0, r[1].0);
    }

    #[test]
    fn level_accepts_number_or_name() {
        for text in [r#"{"level": 4, "n_agents": 7, "capacity": 2}"#, r#"{"level": "L4", "n_agents": 7, "capacity": 2}"#] {
            assert_eq!(LevelConfig::from_json(text).unwrap().level, Level::L4);
        }
        assert!(LevelConfig::from_json(r#"{"level": 6, "n_agents": 7, "capacity": 2}"#).is_err());
        assert!(LevelConfig::from_json(r#"{"level": "L0", "n_agents": 7, "capacity": 2}"#).is_err());
    }
}
