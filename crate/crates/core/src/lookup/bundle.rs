use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ExperimentTable, MetricBounds, TableError, TaskBundle};
use crate::model::{CandidateMode, ConfigSpace, Configuration, Dimension, Direction, FidelityTag};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violation at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("record outside space in `{experiment}`: `{canonical}` ({reason})")]
    RecordOutsideSpace {
        experiment: String,
        canonical: String,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    task_id: String,
    direction: Direction,
    task_text: String,
    fidelity_key: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bounds: Option<MetricBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    top_k: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, serde_json::Value>,
    experiments: Vec<ExperimentFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    experiment_id: String,
    fidelity: FidelityTag,
    env_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    redact_terms: Vec<String>,
    space: SpaceFile,
    records: Vec<RecordFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    candidate_mode: CandidateMode,
    dimensions: Vec<Dimension>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    explicit_candidates: Vec<Configuration>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordFile {
    config: Configuration,
    score: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    details: BTreeMap<String, String>,
}

fn schema(path: impl Into<String>, message: impl ToString) -> LoadError {
    LoadError::SchemaViolation {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Reads and fully validates one bundle document.
pub fn load_bundle<R: Read>(mut source: R) -> Result<TaskBundle, LoadError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| LoadError::MalformedDocument(e.to_string()))?;
    let file: BundleFile = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner())
    })?;
    from_file(file)
}

pub fn load_bundle_file(path: impl AsRef<Path>) -> Result<TaskBundle, LoadError> {
    load_bundle(std::fs::File::open(path)?)
}

fn from_file(file: BundleFile) -> Result<TaskBundle, LoadError> {
    if file.experiments.is_empty() {
        return Err(schema("experiments", "at least one experiment is required"));
    }
    if let Some(b) = file.bounds {
        let (best, worst) = (file.direction.utility(b.best), file.direction.utility(b.worst));
        if !(b.best.is_finite() && b.worst.is_finite()) || best < worst {
            return Err(schema(
                "bounds",
                TableError::BadBounds {
                    best: b.best,
                    worst: b.worst,
                },
            ));
        }
    }
    let mut tables = Vec::with_capacity(file.experiments.len());
    for (i, exp) in file.experiments.into_iter().enumerate() {
        let base = format!("experiments[{i}]");
        if exp.records.is_empty() {
            return Err(schema(format!("{base}.records"), "records must be non-empty"));
        }
        let space = ConfigSpace::new(
            exp.space.dimensions,
            exp.space.candidate_mode,
            exp.space.explicit_candidates,
        )
        .map_err(|e| schema(format!("{base}.space"), e))?;
        let rows = exp
            .records
            .into_iter()
            .map(|r| (r.config, r.score, r.details))
            .collect();
        let table = ExperimentTable::new(
            exp.experiment_id.clone(),
            exp.fidelity,
            exp.env_text,
            space,
            file.direction,
            rows,
        )
        .map_err(|e| match e {
            TableError::RecordOutsideSpace { canonical, reason } => LoadError::RecordOutsideSpace {
                experiment: exp.experiment_id.clone(),
                canonical,
                reason,
            },
            other => schema(format!("{base}.records"), other),
        })?;
        tables.push(table.with_redact_terms(exp.redact_terms));
    }
    let mut bundle = TaskBundle::new(
        file.task_id,
        file.task_text,
        file.direction,
        file.fidelity_key,
        tables,
    )
    .map_err(|e| schema("experiments", e))?;
    bundle.bounds = file.bounds;
    bundle.top_k = file.top_k;
    bundle.metadata = file.metadata;
    Ok(bundle)
}

/// Serializes a bundle to its document form. Output is deterministic:
/// records are written in canonical-key order.
pub fn write_bundle(bundle: &TaskBundle) -> String {
    let file = BundleFile {
        task_id: bundle.task_id.clone(),
        direction: bundle.direction,
        task_text: bundle.task_text.clone(),
        fidelity_key: bundle.fidelity_key.clone(),
        bounds: bundle.bounds,
        top_k: bundle.top_k,
        metadata: bundle.metadata.clone(),
        experiments: bundle
            .experiments
            .iter()
            .map(|t| ExperimentFile {
                experiment_id: t.experiment_id.clone(),
                fidelity: t.fidelity.clone(),
                env_text: t.env_text.clone(),
                redact_terms: t.redact_terms.clone(),
                space: SpaceFile {
                    candidate_mode: t.space.mode(),
                    dimensions: t.space.dimensions().to_vec(),
                    explicit_candidates: t.space.candidates().to_vec(),
                },
                records: t
                    .records()
                    .iter()
                    .map(|r| RecordFile {
                        config: r.config.clone(),
                        score: r.outcome.score,
                        details: r.outcome.details.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("bundle serializes");
    out.push('\n');
    out
}
