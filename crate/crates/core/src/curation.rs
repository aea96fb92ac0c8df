//! Cross-fidelity sample construction and prompt rendering.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::TrajectoryRecord;
use crate::lookup::{ExperimentTable, Record, TaskBundle};
use crate::model::{CandidateMode, Configuration, Direction, DimensionKind, FidelityLevel};
use crate::proposal::{py_list, render_proposal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurationError {
    #[error("experiment `{experiment}` lacks fidelity metadata `{key}`")]
    MissingMetadata { experiment: String, key: String },
    #[error("bundle declares no fidelity key and not every experiment has a level")]
    NoFidelityKey,
    #[error("{0} tier is empty")]
    EmptyTier(&'static str),
    #[error("K must be at least 1")]
    ZeroK,
    #[error("no budgets given")]
    NoBudgets,
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("trajectory has {0} turns; at least 2 are needed")]
    TooShortTrajectory(usize),
}

/// Experiment ids per fidelity tier, each in ascending fidelity order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelitySplit {
    pub low: Vec<String>,
    pub medium: Vec<String>,
    pub high: Vec<String>,
}

impl FidelitySplit {
    pub fn tier(&self, level: FidelityLevel) -> &[String] {
        match level {
            FidelityLevel::Low => &self.low,
            FidelityLevel::Medium => &self.medium,
            FidelityLevel::High => &self.high,
        }
    }

    pub fn level_of(&self, experiment_id: &str) -> Option<FidelityLevel> {
        [FidelityLevel::Low, FidelityLevel::Medium, FidelityLevel::High]
            .into_iter()
            .find(|&l| self.tier(l).iter().any(|e| e == experiment_id))
    }
}

/// Sorts experiments on the bundle's fidelity key and assigns tiers.
/// Declared levels are kept as-is; unlabeled experiments fall into the
/// tercile of their sorted position.
pub fn order_by_fidelity(bundle: &TaskBundle) -> Result<FidelitySplit, CurationError> {
    let all_labeled = bundle.experiments.iter().all(|e| e.fidelity.level.is_some());
    if bundle.fidelity_key.is_empty() && !all_labeled {
        return Err(CurationError::NoFidelityKey);
    }
    let mut keyed: Vec<(Vec<f64>, &ExperimentTable)> = Vec::new();
    for exp in &bundle.experiments {
        let mut key = Vec::with_capacity(bundle.fidelity_key.len());
        for name in &bundle.fidelity_key {
            let v = exp.fidelity.metadata.get(name).ok_or_else(|| CurationError::MissingMetadata {
                experiment: exp.experiment_id.clone(),
                key: name.clone(),
            })?;
            key.push(*v);
        }
        keyed.push((key, exp));
    }
    keyed.sort_by(|(a, ea), (b, eb)| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then_with(|| ea.experiment_id.cmp(&eb.experiment_id))
    });
    let n = keyed.len();
    let mut split = FidelitySplit::default();
    for (i, (_, exp)) in keyed.iter().enumerate() {
        let level = exp.fidelity.level.unwrap_or(match 3 * i / n {
            0 => FidelityLevel::Low,
            1 => FidelityLevel::Medium,
            _ => FidelityLevel::High,
        });
        let tier = match level {
            FidelityLevel::Low => &mut split.low,
            FidelityLevel::Medium => &mut split.medium,
            FidelityLevel::High => &mut split.high,
        };
        tier.push(exp.experiment_id.clone());
    }
    Ok(split)
}

/// The `k` best records, descending by utility, ties by canonical key.
pub fn top_k(table: &ExperimentTable, k: usize) -> Vec<&Record> {
    let mut recs: Vec<&Record> = table.records().iter().collect();
    recs.sort_by(|a, b| {
        b.outcome
            .utility()
            .total_cmp(&a.outcome.utility())
            .then_with(|| a.key.cmp(&b.key))
    });
    recs.truncate(k);
    recs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoBlock {
    pub experiment_id: String,
    /// Top-K configurations, best first.
    pub configs: Vec<Configuration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationSample {
    pub role: Role,
    pub target: String,
    pub budget: usize,
    pub k: usize,
    pub demos: Vec<DemoBlock>,
}

/// Which tiers feed test-time demonstrations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestDemoTiers {
    #[default]
    Medium,
    MediumAndLow,
}

fn demo_blocks(bundle: &TaskBundle, ids: &[&String], k: usize) -> Result<Vec<DemoBlock>, CurationError> {
    ids.iter()
        .map(|id| {
            let table = bundle
                .experiment(id)
                .ok_or_else(|| CurationError::UnknownExperiment(id.to_string()))?;
            Ok(DemoBlock {
                experiment_id: id.to_string(),
                configs: top_k(table, k).into_iter().map(|r| r.config.clone()).collect(),
            })
        })
        .collect()
}

/// Train samples pair every medium experiment with all low-tier demos;
/// test samples pair every high experiment with medium-tier demos (or
/// medium and low, per `test_demos`). One sample per budget.
pub fn build_samples(
    bundle: &TaskBundle,
    split: &FidelitySplit,
    k: usize,
    budgets: &[usize],
    test_demos: TestDemoTiers,
) -> Result<Vec<CurationSample>, CurationError> {
    if k == 0 {
        return Err(CurationError::ZeroK);
    }
    if budgets.is_empty() {
        return Err(CurationError::NoBudgets);
    }
    if split.medium.is_empty() {
        return Err(CurationError::EmptyTier("medium"));
    }
    if split.high.is_empty() {
        return Err(CurationError::EmptyTier("high"));
    }
    let low: Vec<&String> = split.low.iter().collect();
    let test_ids: Vec<&String> = match test_demos {
        TestDemoTiers::Medium => split.medium.iter().collect(),
        TestDemoTiers::MediumAndLow => split.medium.iter().chain(&split.low).collect(),
    };
    let train_demos = demo_blocks(bundle, &low, k)?;
    let test_demos = demo_blocks(bundle, &test_ids, k)?;
    let mut out = Vec::new();
    for (role, targets, demos) in [
        (Role::Train, &split.medium, &train_demos),
        (Role::Test, &split.high, &test_demos),
    ] {
        for target in targets {
            if bundle.experiment(target).is_none() {
                return Err(CurationError::UnknownExperiment(target.clone()));
            }
            for &budget in budgets {
                out.push(CurationSample {
                    role,
                    target: target.clone(),
                    budget,
                    k,
                    demos: demos.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// The single sample for `target` under the same tier rules as
/// [`build_samples`]. Without a usable split the sample carries no demos;
/// low-tier targets never have demos.
pub fn sample_for(
    bundle: &TaskBundle,
    target: &str,
    budget: usize,
    k: usize,
    test_demos: TestDemoTiers,
) -> Result<CurationSample, CurationError> {
    if k == 0 {
        return Err(CurationError::ZeroK);
    }
    if bundle.experiment(target).is_none() {
        return Err(CurationError::UnknownExperiment(target.into()));
    }
    let split = order_by_fidelity(bundle).ok();
    let level = split.as_ref().and_then(|s| s.level_of(target));
    let ids: Vec<&String> = match (&split, level) {
        (Some(s), Some(FidelityLevel::High)) => match test_demos {
            TestDemoTiers::Medium => s.medium.iter().collect(),
            TestDemoTiers::MediumAndLow => s.medium.iter().chain(&s.low).collect(),
        },
        (Some(s), Some(FidelityLevel::Medium)) => s.low.iter().collect(),
        _ => Vec::new(),
    };
    Ok(CurationSample {
        role: if level == Some(FidelityLevel::High) { Role::Test } else { Role::Train },
        target: target.into(),
        budget,
        k,
        demos: demo_blocks(bundle, &ids, k)?,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Drop demonstrations entirely.
    pub no_demos: bool,
    /// Drop task and environment descriptions, keeping structure only.
    pub no_rich_text: bool,
}

fn redact(text: &str, terms: &[String]) -> String {
    let mut out = text.to_string();
    for t in terms.iter().filter(|t| !t.is_empty()) {
        out = out.replace(t.as_str(), "[redacted]");
    }
    out
}

fn fidelity_line(bundle: &TaskBundle, table: &ExperimentTable) -> String {
    let parts: Vec<String> = bundle
        .fidelity_key
        .iter()
        .filter_map(|k| table.fidelity.metadata.get(k).map(|v| format!("{k}={v}")))
        .collect();
    parts.join(", ")
}

/// Python-dict view of a factored grid, e.g. `{'lr': [1e-06, 5e-06], 'mb': [16, 32]}`.
pub fn render_grid(table: &ExperimentTable) -> String {
    let body: Vec<String> = table
        .space
        .dimensions()
        .iter()
        .map(|d| format!("'{}': {}", d.name, py_list(&d.allowed)))
        .collect();
    format!("{{{}}}", body.join(", "))
}

fn render_space(table: &ExperimentTable, out: &mut String) {
    let space = &table.space;
    match space.mode() {
        CandidateMode::FactoredGrid => {
            let _ = writeln!(out, "\"{}\"", render_grid(table));
            for d in space.dimensions() {
                if d.kind == DimensionKind::PerLayerList {
                    let src = d.layer_count_source.as_deref().unwrap_or("?");
                    let _ = writeln!(
                        out,
                        "- {} is a list with one value per layer; its length follows {}",
                        d.name, src
                    );
                }
            }
        }
        CandidateMode::ExplicitList => {
            let _ = writeln!(out, "Choose one of the following {} options:", space.candidates().len());
            for (i, c) in space.candidates().iter().enumerate() {
                let _ = writeln!(out, "{}. {}", i + 1, render_proposal(c, space));
            }
        }
    }
}

fn dimension_help(bundle: &TaskBundle, out: &mut String, table: &ExperimentTable) {
    let Some(help) = bundle.metadata.get("dimension_help").and_then(|v| v.as_object()) else {
        return;
    };
    let lines: Vec<String> = table
        .space
        .dimensions()
        .iter()
        .filter_map(|d| help.get(&d.name).and_then(|h| h.as_str()).map(|h| format!("- {}: {h}", d.name)))
        .collect();
    if !lines.is_empty() {
        out.push_str("In this configuration space:\n");
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
    }
}

/// Renders the Task / Context / Instructions prompt for one sample.
/// Demonstrations carry configurations only, never scores.
pub fn render_context(sample: &CurationSample, bundle: &TaskBundle, opts: RenderOptions) -> String {
    let table = bundle
        .experiment(&sample.target)
        .expect("sample targets an experiment of this bundle");
    let terms = &table.redact_terms;
    let mut out = String::new();

    out.push_str("## Task\n");
    if !opts.no_rich_text && !bundle.task_text.is_empty() {
        let _ = writeln!(out, "{}", redact(&bundle.task_text, terms));
    }
    let (better, phrase) = match bundle.direction {
        Direction::Maximize => ("higher", "maximize"),
        Direction::Minimize => ("lower", "minimize"),
    };
    let _ = writeln!(out, "Optimization target: {phrase} the score. The {better} the score, the better.");
    if !opts.no_rich_text && !table.env_text.is_empty() {
        let _ = writeln!(out, "Target environment: {}", redact(&table.env_text, terms));
    }
    let fid = fidelity_line(bundle, table);
    if !fid.is_empty() {
        let _ = writeln!(out, "Target fidelity: {fid}");
    }

    out.push_str("\n## Context\n");
    out.push_str("Configuration space (must strictly follow):\n");
    render_space(table, &mut out);
    if !opts.no_rich_text {
        dimension_help(bundle, &mut out, table);
    }
    let _ = writeln!(out, "Remaining budget: {} evaluations.", sample.budget);
    if opts.no_demos || sample.demos.is_empty() {
        out.push_str("No prior experiments are available for this task.\n");
    } else {
        let _ = writeln!(
            out,
            "From previous low-fidelity experiments, here are previous related environment and Top{} score configurations which may be helpful for you to propose the next promising configuration.",
            sample.k
        );
        for block in &sample.demos {
            let demo = bundle
                .experiment(&block.experiment_id)
                .expect("demo experiments belong to the bundle");
            let env = if opts.no_rich_text {
                block.experiment_id.clone()
            } else {
                redact(&demo.env_text, &demo.redact_terms)
            };
            let _ = writeln!(out, "Experiment Environment information: {env}");
            let fid = fidelity_line(bundle, demo);
            if !fid.is_empty() {
                let _ = writeln!(out, "Fidelity: {fid}");
            }
            let _ = writeln!(out, "In this environment, the Top-{} configurations are:", sample.k);
            for (i, c) in block.configs.iter().enumerate() {
                let _ = writeln!(out, "{}. {}", i + 1, render_proposal(c, &demo.space));
            }
            out.push_str("######\n");
        }
    }

    out.push_str("\n## Instructions\n");
    out.push_str("1. All values must strictly follow the configuration space.\n");
    out.push_str("2. Propose one configuration per turn and never repeat a configuration.\n");
    let _ = writeln!(
        out,
        "3. Consider your remaining budget of {} when trading off exploration and exploitation.",
        sample.budget
    );
    out.push_str("4. You MUST call the \"exec_config\" tool with the configuration dict wrapped between <config> and </config> tags.\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub raw: String,
    pub canonical: Option<String>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRequest {
    /// 1-based index of the removed turn.
    pub removed_turn: usize,
    pub transcript: Vec<TranscriptTurn>,
    pub best_config: Configuration,
    pub best_canonical: String,
    pub instructions: String,
}

/// Drops the last or second-to-last turn (seeded coin) and asks an external
/// agent to continue towards the table's best configuration.
pub fn truncate_for_continuation(
    traj: &TrajectoryRecord,
    table: &ExperimentTable,
    seed: u64,
) -> Result<ContinuationRequest, CurationError> {
    let n = traj.turns.len();
    if n < 2 {
        return Err(CurationError::TooShortTrajectory(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let removed = if rng.random_bool(0.5) { n } else { n - 1 };
    let transcript = traj
        .turns
        .iter()
        .enumerate()
        .filter(|(i, _)| i + 1 != removed)
        .map(|(_, t)| TranscriptTurn {
            raw: t.raw.clone(),
            canonical: t.canonical.clone(),
            score: t.score,
        })
        .collect();
    let best = top_k(table, 1)[0];
    Ok(ContinuationRequest {
        removed_turn: removed,
        transcript,
        best_config: best.config.clone(),
        best_canonical: best.key.clone(),
        instructions: format!(
            "Continue the transcript with one more turn. Reason from the previous results towards the configuration {} and call \"exec_config\" with it between <config> and </config> tags.",
            render_proposal(&best.config, &table.space)
        ),
    })
}

/// True when some executed turn hit a utility-argmax record.
pub fn accept_trajectory(traj: &TrajectoryRecord, table: &ExperimentTable) -> bool {
    let best = table.argmax_keys();
    traj.turns
        .iter()
        .filter_map(|t| t.canonical.as_deref())
        .any(|k| best.contains(&k))
}

/// One line of the curated-sample export stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum CurationRecord {
    Sample {
        role: Role,
        target: String,
        budget: usize,
        prompt: String,
        demo_experiments: Vec<String>,
        k: usize,
    },
    Continuation {
        target: String,
        #[serde(flatten)]
        request: ContinuationRequest,
    },
}

impl CurationRecord {
    pub fn sample(sample: &CurationSample, bundle: &TaskBundle, opts: RenderOptions) -> Self {
        Self::Sample {
            role: sample.role,
            target: sample.target.clone(),
            budget: sample.budget,
            prompt: render_context(sample, bundle, opts),
            demo_experiments: if opts.no_demos {
                Vec::new()
            } else {
                sample.demos.iter().map(|d| d.experiment_id.clone()).collect()
            },
            k: sample.k,
        }
    }
}
