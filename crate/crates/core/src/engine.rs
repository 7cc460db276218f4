//! The round loop.
//!
//! Per round: forecast → `p_llm` → optional tribal override → every agent
//! decides → settle demand and rewards → adapt `p` (L2/L4/L5) → tribe updates
//! (L5) → the demand joins the shared history window.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{initial_p_spectrum, roster, AdaptRule, ForecasterKind, Level, LevelConfig};
use crate::error::{Error, Result};
use crate::forecast::{self, Backend, DemandDistribution, ForecasterBinding, HistoryWindow, RemoteClient};
use crate::rng::{RngStream, StreamRole};
use crate::tribes::{conch_level, tribal_override, TribeParams, TribeSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: usize,
    pub model_id: String,
    pub label: String,
    /// Disposition at round 0.
    pub p_initial: f64,
    pub p: f64,
    pub score: i64,
    pub wins: usize,
    pub tribe_id: Option<u32>,
    pub loyalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub agent_id: usize,
    pub p_llm_value: f64,
    /// Disposition the filter used (the tribal override when present).
    pub p_used: f64,
    pub p_eff: f64,
    pub action: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    /// `a_i` as 0/1.
    pub actions: Vec<u8>,
    pub demand: usize,
    pub overloaded: bool,
    pub rewards: Vec<i8>,
    /// Dispositions at decision time, before this round's adaptation.
    pub p_values: Vec<f64>,
    pub p_llm: Vec<f64>,
    /// Dispositions after the tribal override; empty outside L5.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_used: Vec<f64>,
    pub conch_level: f64,
    /// Tribe sizes, largest first; empty outside L5.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partition: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tribe_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<String>,
}

impl RoundRecord {
    pub fn decision(&self, agent_id: usize) -> DecisionTrace {
        let p_used = self.p_used.get(agent_id).copied().unwrap_or(self.p_values[agent_id]);
        let x = self.p_llm[agent_id];
        DecisionTrace {
            agent_id,
            p_llm_value: x,
            p_used,
            p_eff: p_used * x + (1.0 - p_used) * (1.0 - x),
            action: self.actions[agent_id] == 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub level: Level,
    pub seed: u64,
    pub capacity: usize,
    pub warmup: usize,
    /// Warm-start history the window was prefilled with.
    pub initial_history: Vec<u32>,
    pub records: Vec<RoundRecord>,
    pub final_agents: Vec<AgentState>,
    /// Fraction of post-warm-up rounds with demand above capacity.
    pub overload_rate: f64,
    /// Fraction of post-warm-up rounds each agent was rewarded.
    pub win_rate_per_agent: Vec<f64>,
}

impl EpisodeResult {
    pub fn measured(&self) -> &[RoundRecord] {
        &self.records[self.warmup..]
    }

    pub fn demands(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.demand).collect()
    }

    /// One JSON object per round.
    pub fn write_trace<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// `p·x + (1−p)(1−x)`: followers (`p = 1`) pass the forecast through,
/// anti-followers (`p = 0`) take its complement.
pub fn disposition_filter(p: f64, p_llm_value: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&p_llm_value) {
        return Err(Error::InvalidArgument(format!(
            "disposition filter needs p and p_llm in [0, 1], got ({p}, {p_llm_value})"
        )));
    }
    // Centered form 0.5 + (p − 0.5)(2x − 1) is algebraically identical and
    // exact at p = 0.5; the endpoints are taken literally.
    let v = if p == 1.0 {
        p_llm_value
    } else if p == 0.0 {
        1.0 - p_llm_value
    } else {
        0.5 + (p - 0.5) * (2.0 * p_llm_value - 1.0)
    };
    Ok(v.clamp(0.0, 1.0))
}

/// One biased coin flip (exactly one draw from `rng`).
pub fn decide(
    agent: &AgentState,
    p_llm_value: f64,
    effective_p_override: Option<f64>,
    rng: &mut RngStream,
) -> Result<DecisionTrace> {
    let p_used = effective_p_override.unwrap_or(agent.p);
    let p_eff = disposition_filter(p_used, p_llm_value)?;
    Ok(DecisionTrace {
        agent_id: agent.agent_id,
        p_llm_value,
        p_used,
        p_eff,
        action: rng.bernoulli(p_eff),
    })
}

/// Demand and per-agent rewards. Within capacity accessors win; over
/// capacity holders win.
pub fn settle_round(actions: &[bool], capacity: usize) -> (usize, Vec<i8>) {
    let demand = actions.iter().filter(|&&a| a).count();
    let overloaded = demand > capacity;
    let rewards = actions
        .iter()
        .map(|&a| if a != overloaded { 1 } else { -1 })
        .collect();
    (demand, rewards)
}

/// Reinforcement step for one agent's disposition.
pub fn adapt_p(p: f64, reward: i8, step: f64, rule: AdaptRule, rng: &mut RngStream) -> f64 {
    let perturb = match rule {
        AdaptRule::PerturbOnLoss => reward < 0,
        AdaptRule::AlwaysPerturb => true,
    };
    if !perturb {
        return p;
    }
    (p + rng.uniform_in(-step, step)).clamp(0.0, 1.0)
}

/// Smoothing multiplier giving agent `i` of `n` its own empirical forecaster:
/// log-spaced from 10^-1.5 to 10^1.5.
pub fn diversity_factor(i: usize, n: usize) -> f64 {
    if n < 2 {
        return 1.0;
    }
    10f64.powf(-1.5 + 3.0 * i as f64 / (n - 1) as f64)
}

/// Forecasters the level calls for: one shared binding for L1/L2, one per
/// agent otherwise.
pub fn standard_bindings(cfg: &LevelConfig) -> Result<Vec<ForecasterBinding>> {
    let n = cfg.n_agents;
    let endpoint = |e: &Option<String>| forecast::resolve_endpoint(e.as_deref());
    if cfg.level.shared_forecaster() {
        let backend = match &cfg.forecaster_kind {
            ForecasterKind::Uniform => Backend::Uniform,
            ForecasterKind::Fixed(v) => Backend::Fixed(DemandDistribution::new(v.clone())?),
            ForecasterKind::Empirical { smoothing } => Backend::Empirical { smoothing: *smoothing },
            ForecasterKind::Remote { endpoint: e } => Backend::Remote {
                endpoint: endpoint(e)?,
                model_id: crate::config::MODELS[0].to_string(),
            },
        };
        return Ok(vec![ForecasterBinding::shared(backend)]);
    }
    let models = roster(n);
    (0..n)
        .map(|i| {
            let backend = match &cfg.forecaster_kind {
                ForecasterKind::Uniform => Backend::Uniform,
                ForecasterKind::Fixed(v) => Backend::Fixed(DemandDistribution::new(v.clone())?),
                ForecasterKind::Empirical { smoothing } => Backend::Empirical {
                    smoothing: smoothing * diversity_factor(i, n),
                },
                ForecasterKind::Remote { endpoint: e } => Backend::Remote {
                    endpoint: endpoint(e)?,
                    model_id: models[i].1.clone(),
                },
            };
            Ok(ForecasterBinding::new(backend))
        })
        .collect()
}

/// Validates `cfg`, builds the level's forecasters and runs one seed.
pub fn simulate(cfg: &LevelConfig, seed: u64) -> Result<EpisodeResult> {
    cfg.validate().map_err(Error::InvalidConfig)?;
    if cfg.level == Level::L1 {
        return run_level1(cfg, seed);
    }
    let bindings = standard_bindings(cfg)?;
    let tribes = cfg.level.has_tribes().then_some(cfg.tribes);
    run_episode(cfg, seed, &bindings, tribes)
}

fn initial_agents(cfg: &LevelConfig, seed: u64) -> Result<Vec<AgentState>> {
    let mut init_rng = RngStream::new(seed, StreamRole::Init);
    let ps = initial_p_spectrum(cfg.n_agents, cfg.effective_p_init(), &mut init_rng)?;
    Ok(roster(cfg.n_agents)
        .into_iter()
        .zip(ps)
        .enumerate()
        .map(|(agent_id, ((label, model_id), p))| AgentState {
            agent_id,
            model_id,
            label,
            p_initial: p,
            p,
            score: 0,
            wins: 0,
            tribe_id: None,
            loyalty: 0.0,
        })
        .collect())
}

fn finish(
    cfg: &LevelConfig,
    seed: u64,
    initial_history: Vec<u32>,
    records: Vec<RoundRecord>,
    final_agents: Vec<AgentState>,
) -> EpisodeResult {
    let measured = &records[cfg.warmup..];
    let rounds = measured.len() as f64;
    let overloads = measured.iter().filter(|r| r.overloaded).count();
    let win_rate_per_agent = (0..cfg.n_agents)
        .map(|i| measured.iter().filter(|r| r.rewards[i] > 0).count() as f64 / rounds)
        .collect();
    EpisodeResult {
        level: cfg.level,
        seed,
        capacity: cfg.capacity,
        warmup: cfg.warmup,
        initial_history,
        records,
        final_agents,
        overload_rate: overloads as f64 / rounds,
        win_rate_per_agent,
    }
}

fn credit(agents: &mut [AgentState], rewards: &[i8]) {
    for (agent, &r) in agents.iter_mut().zip(rewards) {
        agent.score += i64::from(r);
        if r > 0 {
            agent.wins += 1;
        }
    }
}

/// L1: each agent accesses with probability `q = C/N` every round; no
/// forecaster, no adaptation. Logged as a pure follower (`p = 1`) of a
/// forecast that always reports `q`.
pub fn run_level1(cfg: &LevelConfig, seed: u64) -> Result<EpisodeResult> {
    if cfg.level != Level::L1 {
        return Err(Error::InvalidArgument(format!("run_level1 called for {}", cfg.level)));
    }
    cfg.validate().map_err(Error::InvalidConfig)?;
    let n = cfg.n_agents;
    let q = cfg.capacity as f64 / n as f64;
    let mut agents = initial_agents(cfg, seed)?;
    let mut rngs: Vec<RngStream> = (0..n).map(|i| RngStream::new(seed, StreamRole::Decide(i))).collect();
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let actions: Vec<bool> = agents
            .iter()
            .zip(&mut rngs)
            .map(|(a, rng)| decide(a, q, None, rng).map(|d| d.action))
            .collect::<Result<_>>()?;
        let (demand, rewards) = settle_round(&actions, cfg.capacity);
        credit(&mut agents, &rewards);
        records.push(RoundRecord {
            round_index: round,
            actions: actions.iter().map(|&a| u8::from(a)).collect(),
            demand,
            overloaded: demand > cfg.capacity,
            rewards,
            p_values: agents.iter().map(|a| a.p).collect(),
            p_llm: vec![q; n],
            p_used: Vec::new(),
            conch_level: 0.0,
            partition: Vec::new(),
            tribe_ids: Vec::new(),
            marker: None,
        });
    }
    Ok(finish(cfg, seed, Vec::new(), records, agents))
}

/// Remote connections owned by one episode, one per endpoint.
#[derive(Default)]
struct ForecastPool {
    clients: BTreeMap<String, RemoteClient>,
}

impl ForecastPool {
    fn forecast(
        &mut self,
        binding: &ForecasterBinding,
        history: &HistoryWindow,
        n: usize,
        temperature: f64,
    ) -> Result<DemandDistribution> {
        match &binding.backend {
            Backend::Remote { endpoint, model_id } => {
                if !self.clients.contains_key(endpoint) {
                    self.clients.insert(endpoint.clone(), RemoteClient::connect(endpoint)?);
                }
                let client = self.clients.get_mut(endpoint).expect("inserted above");
                client.forecast(history, n, model_id, temperature)
            }
            other => forecast::synthetic_forecast(other, history, n),
        }
    }
}

/// Runs one seed of a forecaster-driven level (L2–L5).
///
/// `forecasters` is either a single shared binding, broadcast to every agent,
/// or one binding per agent. Tribes are enabled when `tribes` is given.
pub fn run_episode(
    cfg: &LevelConfig,
    seed: u64,
    forecasters: &[ForecasterBinding],
    tribes: Option<TribeParams>,
) -> Result<EpisodeResult> {
    cfg.validate().map_err(Error::InvalidConfig)?;
    if cfg.level == Level::L1 {
        return run_level1(cfg, seed);
    }
    let n = cfg.n_agents;
    let shared = match forecasters {
        [only] if only.shared => true,
        _ if forecasters.len() == n => false,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "need one shared forecaster or {n}, got {}",
                forecasters.len()
            )))
        }
    };

    let mut agents = initial_agents(cfg, seed)?;
    let mut decide_rngs: Vec<RngStream> = (0..n).map(|i| RngStream::new(seed, StreamRole::Decide(i))).collect();
    let mut adapt_rngs: Vec<RngStream> = (0..n).map(|i| RngStream::new(seed, StreamRole::Adapt(i))).collect();

    let mut engine_rng = RngStream::new(seed, StreamRole::Engine);
    let initial_history: Vec<u32> = (0..cfg.history_window)
        .map(|_| engine_rng.uniform_int(n as u32))
        .collect();
    let mut history = HistoryWindow::from_demands(cfg.history_window, n, &initial_history)?;

    let mut tribe_sys = tribes.map(|params| {
        let ps: Vec<f64> = agents.iter().map(|a| a.p).collect();
        TribeSystem::new(&ps, params)
    });
    let mut pool = ForecastPool::default();
    let mut records: Vec<RoundRecord> = Vec::with_capacity(cfg.rounds);

    for round in 0..cfg.rounds {
        let p_llm_values = match round_forecasts(cfg, forecasters, shared, &history, &mut pool) {
            Ok(v) => v,
            Err(e) => {
                return Err(Error::EpisodeAborted {
                    round,
                    partial: Box::new(records),
                    source: Box::new(e),
                })
            }
        };

        let conch = if tribe_sys.is_some() {
            conch_level(round, cfg.conch_duration, cfg.conch_max)
        } else {
            0.0
        };
        let p_values: Vec<f64> = agents.iter().map(|a| a.p).collect();
        let overrides: Option<Vec<f64>> = tribe_sys.as_ref().map(|sys| {
            agents
                .iter()
                .map(|a| tribal_override(a.p, sys.tribe_mean_of(a.agent_id), conch))
                .collect()
        });
        let (tribe_ids, partition) = match &tribe_sys {
            Some(sys) => (sys.membership().to_vec(), sys.partition()),
            None => (Vec::new(), Vec::new()),
        };

        let mut actions = Vec::with_capacity(n);
        for (i, agent) in agents.iter().enumerate() {
            let ov = overrides.as_ref().map(|o| o[i]);
            actions.push(decide(agent, p_llm_values[i], ov, &mut decide_rngs[i])?.action);
        }
        let (demand, rewards) = settle_round(&actions, cfg.capacity);
        credit(&mut agents, &rewards);

        if cfg.level.adapts() {
            for ((agent, rng), &r) in agents.iter_mut().zip(&mut adapt_rngs).zip(&rewards) {
                agent.p = adapt_p(agent.p, r, cfg.adaptation_step, cfg.adapt_rule, rng);
            }
        }
        if let Some(sys) = tribe_sys.as_mut() {
            let ps: Vec<f64> = agents.iter().map(|a| a.p).collect();
            sys.end_of_round(&ps, &rewards);
        }

        let marker = (tribe_sys.is_some() && round == cfg.conch_duration).then(|| "conch_saturated".to_string());
        records.push(RoundRecord {
            round_index: round,
            actions: actions.iter().map(|&a| u8::from(a)).collect(),
            demand,
            overloaded: demand > cfg.capacity,
            rewards,
            p_values,
            p_llm: p_llm_values,
            p_used: overrides.unwrap_or_default(),
            conch_level: conch,
            partition,
            tribe_ids,
            marker,
        });
        history.push(demand as u32)?;
    }

    if let Some(sys) = &tribe_sys {
        for agent in &mut agents {
            agent.tribe_id = Some(sys.membership()[agent.agent_id]);
            agent.loyalty = sys.loyalty()[agent.agent_id];
        }
    }
    Ok(finish(cfg, seed, initial_history, records, agents))
}

fn round_forecasts(
    cfg: &LevelConfig,
    forecasters: &[ForecasterBinding],
    shared: bool,
    history: &HistoryWindow,
    pool: &mut ForecastPool,
) -> Result<Vec<f64>> {
    let n = cfg.n_agents;
    if shared {
        let dist = pool.forecast(&forecasters[0], history, n, cfg.temperature)?;
        return Ok(vec![forecast::p_llm(&dist, cfg.capacity)?; n]);
    }
    forecasters
        .iter()
        .map(|b| {
            let dist = pool.forecast(b, history, n, cfg.temperature)?;
            forecast::p_llm(&dist, cfg.capacity)
        })
        .collect()
}
