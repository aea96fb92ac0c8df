use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    behavior_metrics, normalized_regret, outcome_reward, regret_max_gap, RewardMode, TaskBounds,
    Turn, TurnStatus,
};
use crate::model::Direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub episode_id: String,
    pub task_id: String,
    pub experiment_id: String,
    pub budget: usize,
    pub direction: Direction,
    pub method: String,
    pub seed: Option<u64>,
    pub matching: bool,
    pub reward_mode: RewardMode,
    pub reward_bounds: TaskBounds,
    pub metric_bounds: TaskBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogTurn {
    pub turn: usize,
    pub raw: String,
    pub canonical: Option<String>,
    pub score: Option<f64>,
    pub matched_flag: bool,
    pub status: TurnStatus,
    pub parsed: bool,
    /// Logical tick (turn index) unless wall-clock stamps were requested.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub reward: f64,
    pub regret: f64,
    pub regret_max_gap: f64,
    pub exec_rate: f64,
    pub unique_rate: f64,
    pub matched_fraction: f64,
    pub aborted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

impl FinalSummary {
    pub(crate) fn compute(
        turns: &[Turn],
        header: &LogHeader,
        aborted: bool,
        abort_reason: Option<String>,
    ) -> Self {
        let reward = if aborted {
            -1.0
        } else {
            outcome_reward(turns, header.reward_bounds, header.budget, header.reward_mode)
        };
        let behavior = behavior_metrics(turns, header.budget);
        Self {
            reward,
            regret: normalized_regret(turns, header.metric_bounds),
            regret_max_gap: regret_max_gap(turns, header.metric_bounds),
            exec_rate: behavior.execution_rate,
            unique_rate: behavior.unique_config_rate,
            matched_fraction: behavior.matched_fraction,
            aborted,
            abort_reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogLine {
    Header(LogHeader),
    Turn(LogTurn),
    Final(FinalSummary),
}

#[derive(Debug, Error)]
pub enum LogParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("log has no header line")]
    MissingHeader,
    #[error("line {line}: unexpected {what}")]
    OutOfOrder { line: usize, what: &'static str },
}

/// Append-only record of one episode, stored as JSON lines: a header, one
/// line per turn, and an optional final summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub turns: Vec<LogTurn>,
    pub summary: Option<FinalSummary>,
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &LogLine| {
            out.push_str(&serde_json::to_string(line).expect("log lines serialize"));
            out.push('\n');
        };
        push(&LogLine::Header(self.header.clone()));
        for t in &self.turns {
            push(&LogLine::Turn(t.clone()));
        }
        if let Some(s) = &self.summary {
            push(&LogLine::Final(s.clone()));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogParseError> {
        let mut header = None;
        let mut turns = Vec::new();
        let mut summary = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(line).map_err(|e| LogParseError::Malformed {
                line: n,
                message: e.to_string(),
            })?;
            if summary.is_some() {
                return Err(LogParseError::OutOfOrder {
                    line: n,
                    what: "line after the final summary",
                });
            }
            match parsed {
                LogLine::Header(h) if header.is_none() => header = Some(h),
                LogLine::Header(_) => {
                    return Err(LogParseError::OutOfOrder {
                        line: n,
                        what: "second header",
                    })
                }
                _ if header.is_none() => return Err(LogParseError::MissingHeader),
                LogLine::Turn(t) => turns.push(t),
                LogLine::Final(s) => summary = Some(s),
            }
        }
        Ok(Self {
            header: header.ok_or(LogParseError::MissingHeader)?,
            turns,
            summary,
        })
    }

    /// Rebuilds the runtime view of each turn from the logged fields.
    pub fn runtime_turns(&self) -> Vec<Turn> {
        let dir = self.header.direction;
        self.turns
            .iter()
            .map(|t| Turn {
                raw: t.raw.clone(),
                canonical: t.canonical.clone(),
                score: t.score,
                utility: t.score.map(|s| dir.utility(s).value()),
                details: BTreeMap::new(),
                matched: t.matched_flag,
                parsed: t.parsed,
                status: t.status,
            })
            .collect()
    }

    /// Recomputes every final metric from the logged turns.
    pub fn replay(&self) -> FinalSummary {
        let (aborted, reason) = match &self.summary {
            Some(s) => (s.aborted, s.abort_reason.clone()),
            None => (false, None),
        };
        FinalSummary::compute(&self.runtime_turns(), &self.header, aborted, reason)
    }
}
