//! The L5 culture layer.
//!
//! Agents start in one tribe. Each round an agent's loyalty rises when its
//! reward matches its tribe's majority reward and falls otherwise; once loyalty
//! drops below the defection threshold the agent leaves for the tribe whose
//! mean disposition is closest to its own, or founds a singleton tribe when no
//! tribe is close enough. Tribal influence on decisions is a linear blend of
//! the agent's `p` toward its tribe's mean `p`, weighted by the conch level,
//! which ramps linearly from 0 to its maximum.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::RoundRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TribeParams {
    /// Added to loyalty when the agent's reward matches its tribe majority.
    pub loyalty_gain: f64,
    /// Added to loyalty otherwise (negative).
    pub loyalty_loss: f64,
    pub defection_threshold: f64,
    /// Farthest mean-`p` distance at which a defector joins an existing tribe.
    pub singleton_distance: f64,
    pub defection_enabled: bool,
}

impl Default for TribeParams {
    fn default() -> Self {
        Self {
            loyalty_gain: 1.0,
            loyalty_loss: -1.0,
            defection_threshold: 0.0,
            singleton_distance: 0.25,
            defection_enabled: true,
        }
    }
}

impl TribeParams {
    pub(crate) fn check(&self) -> std::result::Result<(), String> {
        let finite = [
            self.loyalty_gain,
            self.loyalty_loss,
            self.defection_threshold,
            self.singleton_distance,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err("parameters must be finite".into());
        }
        if self.singleton_distance < 0.0 {
            return Err(format!(
                "singleton_distance >= 0 (got {})",
                self.singleton_distance
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tribe {
    pub tribe_id: u32,
    pub members: BTreeSet<usize>,
    pub mean_p: f64,
}

impl Tribe {
    fn recompute_mean(&mut self, ps: &[f64]) {
        let sum: f64 = self.members.iter().map(|&i| ps[i]).sum();
        self.mean_p = sum / self.members.len() as f64;
    }
}

/// Tribal influence ramp: `max_level * min(round / duration, 1)`.
pub fn conch_level(round: usize, duration: usize, max_level: f64) -> f64 {
    if duration == 0 || round >= duration {
        return max_level;
    }
    max_level * (round as f64 / duration as f64)
}

/// Blend of the agent's disposition toward its tribe's mean.
pub fn tribal_override(agent_p: f64, tribe_mean_p: f64, conch: f64) -> f64 {
    let blended = (1.0 - conch) * agent_p + conch * tribe_mean_p;
    blended.clamp(agent_p.min(tribe_mean_p), agent_p.max(tribe_mean_p))
}

/// Majority sign of member rewards; ties count as a win.
pub fn majority_reward(rewards: impl IntoIterator<Item = i8>) -> i8 {
    let total: i64 = rewards.into_iter().map(i64::from).sum();
    if total >= 0 {
        1
    } else {
        -1
    }
}

pub fn update_loyalty(loyalty: f64, agent_reward: i8, tribe_majority_reward: i8, params: &TribeParams) -> f64 {
    if agent_reward == tribe_majority_reward {
        loyalty + params.loyalty_gain
    } else {
        loyalty + params.loyalty_loss
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Defection {
    Join(u32),
    Singleton,
}

/// Where `agent_id` goes if its loyalty has fallen below threshold.
///
/// `tribes` must include the agent's current tribe; it is excluded from the
/// search. An agent already alone in its tribe with nowhere close to go stays.
pub fn maybe_defect(
    agent_id: usize,
    agent_p: f64,
    loyalty: f64,
    tribes: &[Tribe],
    params: &TribeParams,
) -> Option<Defection> {
    if !params.defection_enabled || loyalty >= params.defection_threshold {
        return None;
    }
    let current = tribes.iter().find(|t| t.members.contains(&agent_id));
    let nearest = tribes
        .iter()
        .filter(|t| !t.members.contains(&agent_id))
        .map(|t| ((agent_p - t.mean_p).abs(), t.tribe_id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    match nearest {
        Some((dist, id)) if dist <= params.singleton_distance => Some(Defection::Join(id)),
        _ if current.is_some_and(|t| t.members.len() == 1) => None,
        _ => Some(Defection::Singleton),
    }
}

/// Tribe sizes, largest first.
pub fn partition_sizes(tribes: &[Tribe]) -> Vec<usize> {
    let mut sizes: Vec<usize> = tribes.iter().map(|t| t.members.len()).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// `Σ s²` over tribe sizes: the demand variance of fully correlated blocs.
pub fn partition_variance_cap(sizes: &[usize]) -> usize {
    sizes.iter().map(|s| s * s).sum()
}

/// `3+3+1` style rendering.
pub fn format_partition(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join("+")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectionEvent {
    pub agent_id: usize,
    pub from: u32,
    pub to: u32,
}

/// Tribe state of one episode.
#[derive(Debug, Clone)]
pub struct TribeSystem {
    tribes: Vec<Tribe>,
    membership: Vec<u32>,
    loyalty: Vec<f64>,
    params: TribeParams,
    next_id: u32,
}

impl TribeSystem {
    /// Everyone in tribe 0 with zero loyalty.
    pub fn new(ps: &[f64], params: TribeParams) -> Self {
        let mut all = Tribe {
            tribe_id: 0,
            members: (0..ps.len()).collect(),
            mean_p: 0.0,
        };
        all.recompute_mean(ps);
        Self {
            tribes: vec![all],
            membership: vec![0; ps.len()],
            loyalty: vec![0.0; ps.len()],
            params,
            next_id: 1,
        }
    }

    pub fn tribes(&self) -> &[Tribe] {
        &self.tribes
    }

    pub fn membership(&self) -> &[u32] {
        &self.membership
    }

    pub fn loyalty(&self) -> &[f64] {
        &self.loyalty
    }

    pub fn params(&self) -> &TribeParams {
        &self.params
    }

    fn tribe(&self, id: u32) -> &Tribe {
        self.tribes
            .iter()
            .find(|t| t.tribe_id == id)
            .expect("membership points at a live tribe")
    }

    pub fn tribe_mean_of(&self, agent_id: usize) -> f64 {
        self.tribe(self.membership[agent_id]).mean_p
    }

    pub fn partition(&self) -> Vec<usize> {
        partition_sizes(&self.tribes)
    }

    /// Loyalty bookkeeping and defections after a settled round. `ps` are the
    /// dispositions after this round's adaptation.
    pub fn end_of_round(&mut self, ps: &[f64], rewards: &[i8]) -> Vec<DefectionEvent> {
        for t in &mut self.tribes {
            t.recompute_mean(ps);
        }
        let majority: BTreeMap<u32, i8> = self
            .tribes
            .iter()
            .map(|t| (t.tribe_id, majority_reward(t.members.iter().map(|&i| rewards[i]))))
            .collect();
        for (agent, loyalty) in self.loyalty.iter_mut().enumerate() {
            let m = majority[&self.membership[agent]];
            *loyalty = update_loyalty(*loyalty, rewards[agent], m, &self.params);
        }

        let mut events = Vec::new();
        for agent in 0..ps.len() {
            let Some(choice) = maybe_defect(agent, ps[agent], self.loyalty[agent], &self.tribes, &self.params)
            else {
                continue;
            };
            let from = self.membership[agent];
            let to = match choice {
                Defection::Join(id) => id,
                Defection::Singleton => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.tribes.push(Tribe {
                        tribe_id: id,
                        members: BTreeSet::new(),
                        mean_p: ps[agent],
                    });
                    id
                }
            };
            self.move_agent(agent, from, to, ps);
            self.loyalty[agent] = 0.0;
            events.push(DefectionEvent { agent_id: agent, from, to });
        }
        events
    }

    fn move_agent(&mut self, agent: usize, from: u32, to: u32, ps: &[f64]) {
        for t in &mut self.tribes {
            if t.tribe_id == from {
                t.members.remove(&agent);
            } else if t.tribe_id == to {
                t.members.insert(agent);
            }
        }
        self.tribes.retain(|t| !t.members.is_empty());
        for t in &mut self.tribes {
            if t.tribe_id == from || t.tribe_id == to {
                t.recompute_mean(ps);
            }
        }
        self.membership[agent] = to;
    }

    /// Tribes are disjoint, exhaustive and agree with the membership table.
    pub fn is_consistent(&self) -> bool {
        let mut seen = vec![false; self.membership.len()];
        for t in &self.tribes {
            if t.members.is_empty() {
                return false;
            }
            for &m in &t.members {
                if m >= seen.len() || seen[m] || self.membership[m] != t.tribe_id {
                    return false;
                }
                seen[m] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Tribe id of every agent in every round: `rows[agent][round]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipTimeline {
    pub rows: Vec<Vec<u32>>,
}

pub fn membership_timeline(records: &[RoundRecord]) -> Result<MembershipTimeline> {
    let n = records
        .first()
        .map(|r| r.tribe_ids.len())
        .ok_or_else(|| Error::InvalidArgument("no rounds recorded".into()))?;
    if n == 0 || records.iter().any(|r| r.tribe_ids.len() != n) {
        return Err(Error::InvalidArgument("records carry no tribe membership".into()));
    }
    let rows = (0..n)
        .map(|agent| records.iter().map(|r| r.tribe_ids[agent]).collect())
        .collect();
    Ok(MembershipTimeline { rows })
}

impl MembershipTimeline {
    pub fn n_agents(&self) -> usize {
        self.rows.len()
    }

    pub fn n_rounds(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// First round after which no agent changes tribe again.
    pub fn settled_from(&self) -> usize {
        self.rows
            .iter()
            .filter_map(|row| row.windows(2).rposition(|w| w[0] != w[1]).map(|i| i + 1))
            .max()
            .unwrap_or(0)
    }

    /// Distinct tribe ids present in rounds `from..`.
    pub fn distinct_ids_from(&self, from: usize) -> BTreeSet<u32> {
        self.rows
            .iter()
            .flat_map(|row| row.iter().skip(from).copied())
            .collect()
    }

    /// One header row of agent labels, then one row of tribe ids per round.
    pub fn write_csv<W: Write>(&self, labels: &[String], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["round".to_string()];
        header.extend(labels.iter().cloned());
        w.write_record(&header)?;
        for round in 0..self.n_rounds() {
            let mut row = vec![round.to_string()];
            row.extend(self.rows.iter().map(|r| r[round].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Most frequent partition over rounds `from..`; ties go to the
/// lexicographically smallest.
pub fn modal_partition(records: &[RoundRecord], from: usize) -> Option<Vec<usize>> {
    let mut counts: BTreeMap<&[usize], usize> = BTreeMap::new();
    for r in records.iter().skip(from) {
        *counts.entry(r.partition.as_slice()).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts
        .into_iter()
        .find(|(_, c)| *c == best)
        .map(|(p, _)| p.to_vec())
}
