//! Budget-constrained episodes over one experiment table, and the pure
//! functions that score them.

mod log;
mod session;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lookup::{match_most_similar, ExperimentTable, MetricBounds, ParseQuality, TaskBundle};
use crate::model::{canonicalize, validate, Direction, Utility};
use crate::proposal::{parse_best_effort, parse_strict};

pub use log::{EpisodeLog, FinalSummary, LogHeader, LogLine, LogParseError, LogTurn};
pub use session::{EpisodeOptions, Session};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodeError {
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("budget must be at least 1")]
    NonpositiveBudget,
    #[error("budget of {budget} turns is exhausted")]
    BudgetExhausted { budget: usize },
    #[error("episode runs on `{expected}`, got table `{found}`")]
    WrongTable { expected: String, found: String },
    #[error("episode is already finalized")]
    Finalized,
    #[error("bounds are inconsistent: best {best} < worst {worst}")]
    BadBounds { best: f64, worst: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Matched turns count as invalid outputs.
    #[default]
    Strict,
    /// Matched turns count as valid proposals.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnStatus {
    Valid,
    Matched,
    Invalid,
}

/// One executed (or failed) proposal in the history.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub raw: String,
    /// Key of the record that answered this turn.
    pub canonical: Option<String>,
    pub score: Option<f64>,
    pub utility: Option<f64>,
    pub details: BTreeMap<String, String>,
    pub matched: bool,
    /// Whether any configuration could be read from the raw text.
    pub parsed: bool,
    pub status: TurnStatus,
}

impl Turn {
    fn counts_for_reward(&self, mode: RewardMode) -> bool {
        match self.status {
            TurnStatus::Valid => true,
            TurnStatus::Matched => mode == RewardMode::Lenient,
            TurnStatus::Invalid => false,
        }
    }

    fn succeeded(&self) -> bool {
        self.parsed && self.status != TurnStatus::Invalid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub score: Option<f64>,
    pub details: BTreeMap<String, String>,
    pub matched_flag: bool,
    pub remaining: usize,
    pub status: TurnStatus,
    pub canonical: Option<String>,
}

/// MDP state `(H_t, t, T)` for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub experiment_id: String,
    pub budget: usize,
    /// 1-based index of the next turn.
    pub t: usize,
    pub history: Vec<Turn>,
    pub matching: bool,
}

pub fn init_episode(
    bundle: &TaskBundle,
    experiment_id: &str,
    budget: usize,
) -> Result<EpisodeState, EpisodeError> {
    if bundle.experiment(experiment_id).is_none() {
        return Err(EpisodeError::UnknownExperiment(experiment_id.to_string()));
    }
    if budget == 0 {
        return Err(EpisodeError::NonpositiveBudget);
    }
    Ok(EpisodeState {
        experiment_id: experiment_id.to_string(),
        budget,
        t: 1,
        history: Vec::new(),
        matching: true,
    })
}

impl EpisodeState {
    pub fn with_matching(mut self, on: bool) -> Self {
        self.matching = on;
        self
    }

    pub fn remaining(&self) -> usize {
        self.budget + 1 - self.t
    }

    pub fn is_finished(&self) -> bool {
        self.t > self.budget
    }

    /// Record keys already executed in this episode.
    pub fn executed_keys(&self) -> HashSet<&str> {
        self.history
            .iter()
            .filter_map(|t| t.canonical.as_deref())
            .collect()
    }

    /// Executes one proposal. Malformed text never errors: with matching on
    /// it is redirected to the most similar record, with matching off the
    /// turn is recorded as invalid.
    pub fn step(
        &mut self,
        table: &ExperimentTable,
        raw: &str,
    ) -> Result<Observation, EpisodeError> {
        if self.is_finished() {
            return Err(EpisodeError::BudgetExhausted {
                budget: self.budget,
            });
        }
        if table.experiment_id != self.experiment_id {
            return Err(EpisodeError::WrongTable {
                expected: self.experiment_id.clone(),
                found: table.experiment_id.clone(),
            });
        }
        let turn = if raw.trim().is_empty() {
            invalid_turn(raw, false, "empty proposal")
        } else if self.matching {
            let m = match_most_similar(table, raw);
            Turn {
                raw: raw.to_string(),
                canonical: Some(m.record.key.clone()),
                score: Some(m.record.outcome.score),
                utility: Some(m.record.outcome.utility().value()),
                details: m.record.outcome.details.clone(),
                matched: m.matched,
                parsed: m.parse != ParseQuality::Unparsed,
                status: if m.matched {
                    TurnStatus::Matched
                } else {
                    TurnStatus::Valid
                },
            }
        } else {
            exact_turn(table, raw)
        };
        self.history.push(turn);
        self.t += 1;
        let turn = self.history.last().expect("just pushed");
        Ok(Observation {
            score: turn.score,
            details: turn.details.clone(),
            matched_flag: turn.matched,
            remaining: self.remaining(),
            status: turn.status,
            canonical: turn.canonical.clone(),
        })
    }
}

fn invalid_turn(raw: &str, parsed: bool, reason: &str) -> Turn {
    let mut details = BTreeMap::new();
    details.insert("error".to_string(), reason.to_string());
    Turn {
        raw: raw.to_string(),
        canonical: None,
        score: None,
        utility: None,
        details,
        matched: false,
        parsed,
        status: TurnStatus::Invalid,
    }
}

fn exact_turn(table: &ExperimentTable, raw: &str) -> Turn {
    let space = &table.space;
    let config = match parse_strict(raw, space) {
        Ok(c) => c,
        Err(e) => {
            let parsed = !parse_best_effort(raw, space).is_empty();
            return invalid_turn(raw, parsed, &e.to_string());
        }
    };
    let report = validate(&config, space);
    if !report.is_valid() {
        let reason = report
            .diagnostics
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return invalid_turn(raw, true, &reason);
    }
    match table.get(&canonicalize(&config, space)) {
        Some(record) => Turn {
            raw: raw.to_string(),
            canonical: Some(record.key.clone()),
            score: Some(record.outcome.score),
            utility: Some(record.outcome.utility().value()),
            details: record.outcome.details.clone(),
            matched: false,
            parsed: true,
            status: TurnStatus::Valid,
        },
        None => invalid_turn(raw, true, "configuration not recorded"),
    }
}

/// Best and worst attainable utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskBounds {
    pub y_best: f64,
    pub y_worst: f64,
}

impl TaskBounds {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(y_best: Utility, y_worst: Utility) -> Result<Self, EpisodeError> {
        if !(y_best.0 >= y_worst.0) {
            return Err(EpisodeError::BadBounds {
                best: y_best.0,
                worst: y_worst.0,
            });
        }
        Ok(Self {
            y_best: y_best.0,
            y_worst: y_worst.0,
        })
    }

    pub fn from_table(table: &ExperimentTable) -> Self {
        Self {
            y_best: table.best_utility().0,
            y_worst: table.worst_utility().0,
        }
    }

    /// Converts raw task-wide score bounds to utility bounds.
    pub fn from_metric(bounds: MetricBounds, direction: Direction) -> Result<Self, EpisodeError> {
        Self::new(direction.utility(bounds.best), direction.utility(bounds.worst))
    }

    pub fn is_degenerate(&self) -> bool {
        self.y_best == self.y_worst
    }
}

/// Cumulative regret reward in `[-1, 0]`.
///
/// `-(T*y_best - sum y_t) / (T*y_best - T*y_worst)` when the episode holds
/// exactly `T` pairwise-distinct proposals that all count as valid under
/// `mode`, and `-1` otherwise.
pub fn outcome_reward(turns: &[Turn], bounds: TaskBounds, budget: usize, mode: RewardMode) -> f64 {
    if distinct_valid_count(turns, mode) != budget || turns.len() != budget {
        return -1.0;
    }
    if bounds.is_degenerate() {
        return 0.0;
    }
    let t = budget as f64;
    let mut sum = 0.0;
    for turn in turns {
        sum += turn.utility.expect("valid turns carry a utility");
    }
    let reward = -(t * bounds.y_best - sum) / (t * bounds.y_best - t * bounds.y_worst);
    reward.clamp(-1.0, 0.0)
}

/// Distinct record keys among turns that count as valid under `mode`;
/// returns 0 as soon as any turn does not count, or keys repeat.
pub fn distinct_valid_count(turns: &[Turn], mode: RewardMode) -> usize {
    let mut seen = HashSet::new();
    for turn in turns {
        if !turn.counts_for_reward(mode) {
            return 0;
        }
        let key = turn.canonical.as_deref().expect("valid turns carry a key");
        if !seen.insert(key) {
            return 0;
        }
    }
    seen.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageParams {
    pub epsilon: f64,
}

impl Default for AdvantageParams {
    fn default() -> Self {
        Self { epsilon: 1e-8 }
    }
}

/// Group-normalized advantages `(r_i - mean) / (std + eps)` with the
/// population standard deviation. A constant group (including a single
/// reward) gets exact zeros, whatever rounding the mean picks up.
pub fn group_advantages(rewards: &[f64], params: AdvantageParams) -> Vec<f64> {
    if rewards.iter().all(|&r| r == rewards[0]) {
        return vec![0.0; rewards.len()];
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + params.epsilon;
    rewards.iter().map(|r| (r - mean) / denom).collect()
}

fn executed_utilities(turns: &[Turn]) -> impl Iterator<Item = f64> + '_ {
    turns.iter().filter_map(|t| t.utility)
}

/// Normalized gap between the global optimum and the best configuration
/// found, in `[0, 1]`. An empty or all-invalid history scores 1.
pub fn normalized_regret(turns: &[Turn], bounds: TaskBounds) -> f64 {
    let Some(found) = executed_utilities(turns).max_by(f64::total_cmp) else {
        return 1.0;
    };
    if bounds.is_degenerate() {
        return 0.0;
    }
    ((bounds.y_best - found) / (bounds.y_best - bounds.y_worst)).clamp(0.0, 1.0)
}

/// The max-over-history form of the regret formula, i.e. the gap of the
/// worst executed configuration. Logged next to [`normalized_regret`].
pub fn regret_max_gap(turns: &[Turn], bounds: TaskBounds) -> f64 {
    let Some(worst_found) = executed_utilities(turns).min_by(f64::total_cmp) else {
        return 1.0;
    };
    if bounds.is_degenerate() {
        return 0.0;
    }
    ((bounds.y_best - worst_found) / (bounds.y_best - bounds.y_worst)).clamp(0.0, 1.0)
}

/// Finalized history plus the quantities derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub budget: usize,
    pub turns: Vec<Turn>,
    pub proposals_raw: Vec<String>,
    pub distinct_valid_count: usize,
    pub outcome_reward: f64,
    pub aborted: bool,
}

impl TrajectoryRecord {
    pub fn finalize(state: &EpisodeState, bounds: TaskBounds, mode: RewardMode) -> Self {
        Self::build(state, bounds, mode, false)
    }

    /// Early termination (agent timeout, disconnect, strikes): reward -1.
    pub fn aborted(state: &EpisodeState, bounds: TaskBounds, mode: RewardMode) -> Self {
        Self::build(state, bounds, mode, true)
    }

    fn build(state: &EpisodeState, bounds: TaskBounds, mode: RewardMode, aborted: bool) -> Self {
        let reward = if aborted {
            -1.0
        } else {
            outcome_reward(&state.history, bounds, state.budget, mode)
        };
        Self {
            budget: state.budget,
            proposals_raw: state.history.iter().map(|t| t.raw.clone()).collect(),
            distinct_valid_count: distinct_valid_count(&state.history, mode),
            turns: state.history.clone(),
            outcome_reward: reward,
            aborted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMetrics {
    pub execution_rate: f64,
    pub unique_config_rate: f64,
    pub matched_fraction: f64,
}

/// Execution rate (parsed and executed turns over `T`), unique-config rate
/// (distinct executed records over `T`) and the matched share of `T`.
pub fn behavior_metrics(turns: &[Turn], budget: usize) -> BehaviorMetrics {
    let t = budget as f64;
    let ok: Vec<&Turn> = turns.iter().filter(|t| t.succeeded()).collect();
    let distinct: HashSet<&str> = ok.iter().filter_map(|t| t.canonical.as_deref()).collect();
    let matched = turns.iter().filter(|t| t.matched).count();
    BehaviorMetrics {
        execution_rate: ok.len() as f64 / t,
        unique_config_rate: distinct.len() as f64 / t,
        matched_fraction: matched as f64 / t,
    }
}
