//! Non-LLM policies: random search, Top-K warm start, and two oracles.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::top_k;
use crate::episode::{EpisodeError, EpisodeState, FinalSummary, Session};
use crate::lookup::{ExperimentTable, Record};
use crate::model::{canonicalize, validate, Configuration};
use crate::proposal::render_proposal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("every recorded configuration has been proposed")]
    SpaceExhausted,
    #[error("policy `{0}` needs a seed")]
    MissingSeed(&'static str),
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;
    fn propose(&mut self, state: &EpisodeState, table: &ExperimentTable) -> Result<Configuration, PolicyError>;
}

fn unproposed<'t>(state: &EpisodeState, table: &'t ExperimentTable) -> Vec<&'t Record> {
    let done = state.executed_keys();
    table.records().iter().filter(|r| !done.contains(r.key.as_str())).collect()
}

/// Uniform sampling without replacement over recorded configurations.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn propose(&mut self, state: &EpisodeState, table: &ExperimentTable) -> Result<Configuration, PolicyError> {
        let left = unproposed(state, table);
        if left.is_empty() {
            return Err(PolicyError::SpaceExhausted);
        }
        Ok(left[self.rng.random_range(0..left.len())].config.clone())
    }
}

/// Records in canonical order.
#[derive(Debug, Clone, Default)]
pub struct ExhaustivePolicy;

impl Policy for ExhaustivePolicy {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn propose(&mut self, state: &EpisodeState, table: &ExperimentTable) -> Result<Configuration, PolicyError> {
        unproposed(state, table)
            .first()
            .map(|r| r.config.clone())
            .ok_or(PolicyError::SpaceExhausted)
    }
}

/// Replays the best lower-fidelity configurations that are recorded in the
/// target table, then falls back to random search.
#[derive(Debug, Clone)]
pub struct TopKWarmStart {
    ranked: Vec<Configuration>,
    fallback: RandomPolicy,
}

impl TopKWarmStart {
    /// Ranks each demo table's Top-K by per-table z-score, merges and
    /// deduplicates them, and keeps those valid and recorded in `target`.
    pub fn new(target: &ExperimentTable, demos: &[&ExperimentTable], k: usize, seed: u64) -> Self {
        let mut scored: Vec<(f64, String, Configuration)> = Vec::new();
        for demo in demos {
            let utils: Vec<f64> = demo.records().iter().map(|r| r.outcome.utility().value()).collect();
            let n = utils.len() as f64;
            let mean = utils.iter().sum::<f64>() / n;
            let std = (utils.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n).sqrt();
            for r in top_k(demo, k) {
                let u = r.outcome.utility().value();
                let z = if std > 0.0 { (u - mean) / std } else { 0.0 };
                scored.push((z, r.key.clone(), r.config.clone()));
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let mut seen = HashSet::new();
        let mut ranked = Vec::new();
        for (_, key, config) in scored {
            if !seen.insert(key) {
                continue;
            }
            if !validate(&config, &target.space).is_valid() {
                continue;
            }
            if target.get(&canonicalize(&config, &target.space)).is_some() {
                ranked.push(config);
            }
        }
        Self {
            ranked,
            fallback: RandomPolicy::new(seed),
        }
    }

    /// Demo configurations usable on the target, best first.
    pub fn ranked(&self) -> &[Configuration] {
        &self.ranked
    }
}

impl Policy for TopKWarmStart {
    fn name(&self) -> &'static str {
        "topk_warmstart"
    }

    fn propose(&mut self, state: &EpisodeState, table: &ExperimentTable) -> Result<Configuration, PolicyError> {
        let done = state.executed_keys();
        for c in &self.ranked {
            if !done.contains(canonicalize(c, &table.space).as_str()) {
                return Ok(c.clone());
            }
        }
        self.fallback.propose(state, table)
    }
}

/// Hill climbing on the record set: the nearest unproposed neighbour (by
/// number of differing dimensions, within `radius`) of the best record so
/// far; random when the neighbourhood is spent.
#[derive(Debug, Clone)]
pub struct GreedyLocal {
    radius: usize,
    fallback: RandomPolicy,
}

impl GreedyLocal {
    pub fn new(radius: usize, seed: u64) -> Self {
        Self {
            radius,
            fallback: RandomPolicy::new(seed),
        }
    }
}

fn distance(a: &Configuration, b: &Configuration) -> usize {
    let mut d = 0;
    for (k, v) in &a.values {
        if b.get(k) != Some(v) {
            d += 1;
        }
    }
    d + b.values.keys().filter(|k| a.get(k).is_none()).count()
}

impl Policy for GreedyLocal {
    fn name(&self) -> &'static str {
        "greedy_local"
    }

    fn propose(&mut self, state: &EpisodeState, table: &ExperimentTable) -> Result<Configuration, PolicyError> {
        let incumbent = state
            .history
            .iter()
            .filter(|t| t.utility.is_some())
            .max_by(|a, b| a.utility.unwrap().total_cmp(&b.utility.unwrap()))
            .and_then(|t| table.get(t.canonical.as_deref()?));
        let Some(best) = incumbent else {
            return self.fallback.propose(state, table);
        };
        let near = unproposed(state, table)
            .into_iter()
            .map(|r| (distance(&r.config, &best.config), r))
            .filter(|(d, _)| *d <= self.radius)
            .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.key.cmp(&b.1.key)));
        match near {
            Some((_, r)) => Ok(r.config.clone()),
            None => self.fallback.propose(state, table),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    TopkWarmstart,
    Exhaustive,
    GreedyLocal,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::TopkWarmstart => "topk_warmstart",
            Self::Exhaustive => "exhaustive",
            Self::GreedyLocal => "greedy_local",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "random" => Self::Random,
            "topk_warmstart" | "topk" | "ws" => Self::TopkWarmstart,
            "exhaustive" => Self::Exhaustive,
            "greedy_local" | "greedy" => Self::GreedyLocal,
            other => return Err(PolicyError::UnknownPolicy(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub radius: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub name: PolicyKind,
    #[serde(default)]
    pub params: PolicyParams,
}

impl PolicySpec {
    pub fn new(name: PolicyKind, seed: Option<u64>) -> Self {
        Self {
            name,
            params: PolicyParams {
                seed,
                ..PolicyParams::default()
            },
        }
    }

    pub fn build(
        &self,
        target: &ExperimentTable,
        demos: &[&ExperimentTable],
    ) -> Result<Box<dyn Policy>, PolicyError> {
        let seed = || self.params.seed.ok_or(PolicyError::MissingSeed(self.name.as_str()));
        Ok(match self.name {
            PolicyKind::Random => Box::new(RandomPolicy::new(seed()?)),
            PolicyKind::Exhaustive => Box::new(ExhaustivePolicy),
            PolicyKind::TopkWarmstart => Box::new(TopKWarmStart::new(
                target,
                demos,
                self.params.k.unwrap_or(5),
                seed()?,
            )),
            PolicyKind::GreedyLocal => {
                Box::new(GreedyLocal::new(self.params.radius.unwrap_or(1), seed()?))
            }
        })
    }
}

/// Runs `policy` for the session's whole budget and closes the episode.
pub fn drive(
    policy: &mut dyn Policy,
    session: &mut Session,
    table: &ExperimentTable,
) -> Result<FinalSummary, PolicyError> {
    while !session.is_finished() {
        let config = policy.propose(session.state(), table)?;
        session.step(table, &render_proposal(&config, &table.space))?;
    }
    Ok(session.finish())
}
