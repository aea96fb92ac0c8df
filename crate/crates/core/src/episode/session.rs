use std::time::{SystemTime, UNIX_EPOCH};

use super::{
    init_episode, EpisodeError, EpisodeLog, EpisodeState, FinalSummary, LogHeader, LogTurn,
    Observation, RewardMode, TaskBounds, TrajectoryRecord,
};
use crate::lookup::{ExperimentTable, TaskBundle};

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOptions {
    pub matching: bool,
    pub reward_mode: RewardMode,
    pub method: String,
    pub seed: Option<u64>,
    /// Stamp turns with Unix milliseconds instead of the turn index.
    pub wall_clock: bool,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            matching: true,
            reward_mode: RewardMode::Strict,
            method: "agent".into(),
            seed: None,
            wall_clock: false,
        }
    }
}

/// An episode bound to its log: every step is recorded as it happens.
#[derive(Debug, Clone)]
pub struct Session {
    state: EpisodeState,
    log: EpisodeLog,
    wall_clock: bool,
}

impl Session {
    /// Reward bounds come from the experiment table; metric bounds from the
    /// bundle's declared bounds when present, else the table.
    pub fn start(
        bundle: &TaskBundle,
        experiment_id: &str,
        budget: usize,
        episode_id: impl Into<String>,
        options: EpisodeOptions,
    ) -> Result<Self, EpisodeError> {
        let state = init_episode(bundle, experiment_id, budget)?.with_matching(options.matching);
        let table = bundle.experiment(experiment_id).expect("checked by init");
        let reward_bounds = TaskBounds::from_table(table);
        let metric_bounds = match bundle.bounds {
            Some(b) => TaskBounds::from_metric(b, bundle.direction)?,
            None => reward_bounds,
        };
        let header = LogHeader {
            episode_id: episode_id.into(),
            task_id: bundle.task_id.clone(),
            experiment_id: experiment_id.to_string(),
            budget,
            direction: bundle.direction,
            method: options.method,
            seed: options.seed,
            matching: options.matching,
            reward_mode: options.reward_mode,
            reward_bounds,
            metric_bounds,
        };
        Ok(Self {
            state,
            log: EpisodeLog {
                header,
                turns: Vec::new(),
                summary: None,
            },
            wall_clock: options.wall_clock,
        })
    }

    pub fn episode_id(&self) -> &str {
        &self.log.header.episode_id
    }

    pub fn state(&self) -> &EpisodeState {
        &self.state
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn summary(&self) -> Option<&FinalSummary> {
        self.log.summary.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.state.is_finished()
    }

    pub fn step(&mut self, table: &ExperimentTable, raw: &str) -> Result<Observation, EpisodeError> {
        if self.log.summary.is_some() {
            return Err(EpisodeError::Finalized);
        }
        let obs = self.state.step(table, raw)?;
        let turn = self.state.history.last().expect("step appended");
        let index = self.state.history.len();
        let timestamp = if self.wall_clock {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0)
        } else {
            index as u64
        };
        self.log.turns.push(LogTurn {
            turn: index,
            raw: turn.raw.clone(),
            canonical: turn.canonical.clone(),
            score: turn.score,
            matched_flag: turn.matched,
            status: turn.status,
            parsed: turn.parsed,
            timestamp,
        });
        Ok(obs)
    }

    /// Closes the episode; idempotent.
    pub fn finish(&mut self) -> FinalSummary {
        self.close(false, None)
    }

    /// Early termination: reward -1, regret from the history so far.
    pub fn abort(&mut self, reason: impl Into<String>) -> FinalSummary {
        self.close(true, Some(reason.into()))
    }

    fn close(&mut self, aborted: bool, reason: Option<String>) -> FinalSummary {
        if let Some(s) = &self.log.summary {
            return s.clone();
        }
        let s = FinalSummary::compute(&self.state.history, &self.log.header, aborted, reason);
        self.log.summary = Some(s.clone());
        s
    }

    pub fn trajectory(&self) -> TrajectoryRecord {
        let h = &self.log.header;
        let aborted = self.log.summary.as_ref().is_some_and(|s| s.aborted);
        if aborted {
            TrajectoryRecord::aborted(&self.state, h.reward_bounds, h.reward_mode)
        } else {
            TrajectoryRecord::finalize(&self.state, h.reward_bounds, h.reward_mode)
        }
    }
}
