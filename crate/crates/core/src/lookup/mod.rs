//! Offline lookup tables: task bundles, exact queries and most-similar
//! matching for malformed proposals.

mod bundle;
mod lcs;
mod matching;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    canonicalize, validate, ConfigSpace, Configuration, Diagnostic, Direction, FidelityTag,
    Outcome, Utility,
};

pub use bundle::{load_bundle, load_bundle_file, write_bundle, LoadError};
pub use lcs::longest_common_substring_len;
pub use matching::{match_most_similar, Match, ParseQuality, PREFILTER_KEEP, PREFILTER_THRESHOLD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LookupError {
    #[error("configuration `{0}` is not recorded in this table")]
    NotFound(String),
    #[error("configuration is outside the space: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("experiment `{0}` has no records")]
    NoRecords(String),
    #[error("record `{canonical}` lies outside the space: {reason}")]
    RecordOutsideSpace { canonical: String, reason: String },
    #[error("record `{0}` appears twice")]
    DuplicateRecord(String),
    #[error("record `{canonical}` has non-finite score")]
    NonFiniteScore { canonical: String },
    #[error("duplicate experiment id `{0}`")]
    DuplicateExperiment(String),
    #[error("experiment `{experiment}` lacks fidelity metadata `{key}`")]
    MissingFidelityKey { experiment: String, key: String },
    #[error("bounds are inconsistent: best {best} is worse than worst {worst}")]
    BadBounds { best: f64, worst: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub key: String,
    pub config: Configuration,
    pub outcome: Outcome,
}

/// One fidelity-level experiment: its space and recorded outcomes.
#[derive(Debug, Clone)]
pub struct ExperimentTable {
    pub experiment_id: String,
    pub fidelity: FidelityTag,
    pub env_text: String,
    /// Terms removed from rendered prompts (dataset names and the like).
    pub redact_terms: Vec<String>,
    pub space: ConfigSpace,
    direction: Direction,
    records: Vec<Record>,
    index: HashMap<String, usize>,
}

impl ExperimentTable {
    pub fn new(
        experiment_id: impl Into<String>,
        fidelity: FidelityTag,
        env_text: impl Into<String>,
        space: ConfigSpace,
        direction: Direction,
        rows: Vec<(Configuration, f64, BTreeMap<String, String>)>,
    ) -> Result<Self, TableError> {
        let experiment_id = experiment_id.into();
        if rows.is_empty() {
            return Err(TableError::NoRecords(experiment_id));
        }
        let mut records = Vec::with_capacity(rows.len());
        for (config, score, details) in rows {
            let key = canonicalize(&config, &space);
            let report = validate(&config, &space);
            if !report.is_valid() {
                return Err(TableError::RecordOutsideSpace {
                    canonical: key,
                    reason: report
                        .diagnostics
                        .iter()
                        .map(|d| d.to_string())
                        .collect::<Vec<_>>()
                        .join("; "),
                });
            }
            if !score.is_finite() {
                return Err(TableError::NonFiniteScore { canonical: key });
            }
            records.push(Record {
                key,
                config,
                outcome: Outcome {
                    score,
                    direction,
                    details,
                },
            });
        }
        records.sort_by(|a, b| a.key.cmp(&b.key));
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.key.clone(), i).is_some() {
                return Err(TableError::DuplicateRecord(r.key.clone()));
            }
        }
        Ok(Self {
            experiment_id,
            fidelity,
            env_text: env_text.into(),
            redact_terms: Vec::new(),
            space,
            direction,
            records,
            index,
        })
    }

    pub fn with_redact_terms(mut self, terms: Vec<String>) -> Self {
        self.redact_terms = terms;
        self
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Records in ascending canonical-key order.
    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, canonical: &str) -> Option<&Record> {
        self.index.get(canonical).map(|&i| &self.records[i])
    }

    /// Exact lookup of a configuration that lies in the space.
    pub fn query(&self, config: &Configuration) -> Result<&Outcome, LookupError> {
        let report = validate(config, &self.space);
        if !report.is_valid() {
            return Err(LookupError::Invalid(report.diagnostics));
        }
        let key = canonicalize(config, &self.space);
        self.get(&key)
            .map(|r| &r.outcome)
            .ok_or(LookupError::NotFound(key))
    }

    pub fn best_utility(&self) -> Utility {
        self.records
            .iter()
            .map(|r| r.outcome.utility())
            .max_by(Utility::total_cmp)
            .expect("tables are non-empty")
    }

    pub fn worst_utility(&self) -> Utility {
        self.records
            .iter()
            .map(|r| r.outcome.utility())
            .min_by(Utility::total_cmp)
            .expect("tables are non-empty")
    }

    /// Canonical keys of every record attaining the best utility.
    pub fn argmax_keys(&self) -> Vec<&str> {
        let best = self.best_utility();
        self.records
            .iter()
            .filter(|r| r.outcome.utility() == best)
            .map(|r| r.key.as_str())
            .collect()
    }
}

/// Optional task-wide metric bounds, in raw score units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBounds {
    pub best: f64,
    pub worst: f64,
}

/// Task → fidelity → experiment hierarchy loaded from one bundle file.
#[derive(Debug, Clone)]
pub struct TaskBundle {
    pub task_id: String,
    pub task_text: String,
    pub direction: Direction,
    pub fidelity_key: Vec<String>,
    pub bounds: Option<MetricBounds>,
    /// Demonstration list length used when curating prompts.
    pub top_k: Option<usize>,
    /// Free-form provenance (generator name, functional form, seed).
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub experiments: Vec<ExperimentTable>,
}

impl TaskBundle {
    pub fn new(
        task_id: impl Into<String>,
        task_text: impl Into<String>,
        direction: Direction,
        fidelity_key: Vec<String>,
        experiments: Vec<ExperimentTable>,
    ) -> Result<Self, TableError> {
        let mut ids = HashSet::new();
        for exp in &experiments {
            if !ids.insert(exp.experiment_id.as_str()) {
                return Err(TableError::DuplicateExperiment(exp.experiment_id.clone()));
            }
            if exp.direction != direction {
                // Direction is declared once per task.
                return Err(TableError::RecordOutsideSpace {
                    canonical: exp.experiment_id.clone(),
                    reason: "experiment direction differs from task direction".into(),
                });
            }
            for key in &fidelity_key {
                if !exp.fidelity.metadata.contains_key(key) {
                    return Err(TableError::MissingFidelityKey {
                        experiment: exp.experiment_id.clone(),
                        key: key.clone(),
                    });
                }
            }
        }
        Ok(Self {
            task_id: task_id.into(),
            task_text: task_text.into(),
            direction,
            fidelity_key,
            bounds: None,
            top_k: None,
            metadata: BTreeMap::new(),
            experiments,
        })
    }

    pub fn experiment(&self, id: &str) -> Option<&ExperimentTable> {
        self.experiments.iter().find(|e| e.experiment_id == id)
    }
}
