//! Seeded surrogate generators for the four task families. Every bundle
//! records its functional form in `metadata` and is marked synthetic.

mod arch;
mod grpo;
mod mixture;
mod pretrain;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lookup::{write_bundle, ExperimentTable, TableError, TaskBundle};
use crate::model::{ConfigSpace, Configuration, Direction, FidelityLevel, FidelityTag, SpaceError};

pub use arch::{gen_arch_task, ArchScale, ArchSpec};
pub use grpo::{gen_grpo_task, GrpoExperiment, GrpoSpec};
pub use mixture::{gen_mixture_task, mixture_token, MixtureSpec, MIXTURE_DOMAINS};
pub use pretrain::{
    gen_pretrain_task, PretrainExperiment, PretrainSpec, PRETRAIN_BS_TOKENS, PRETRAIN_LR_TOKENS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("token `{token}` is not an allowed `{dimension}` grid value")]
    InvalidGridToken { dimension: String, token: String },
    #[error("scales `{a}` and `{b}` share `{dimension}` token `{token}`")]
    OverlappingGrids {
        a: String,
        b: String,
        dimension: String,
        token: String,
    },
    #[error("invalid spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum SynthSpec {
    Pretrain(PretrainSpec),
    Architecture(ArchSpec),
    Grpo(GrpoSpec),
    Mixture(MixtureSpec),
}

impl SynthSpec {
    /// Default spec for a task name (`pretrain`, `architecture`, `grpo`, `mixture`).
    pub fn default_for(task: &str, seed: u64) -> Option<Self> {
        Some(match task {
            "pretrain" | "pretrain_hp" => Self::Pretrain(PretrainSpec { seed, ..Default::default() }),
            "architecture" | "arch" => Self::Architecture(ArchSpec { seed, ..Default::default() }),
            "grpo" => Self::Grpo(GrpoSpec { seed, ..Default::default() }),
            "mixture" => Self::Mixture(MixtureSpec { seed, ..Default::default() }),
            _ => return None,
        })
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Pretrain(s) => s.seed,
            Self::Architecture(s) => s.seed,
            Self::Grpo(s) => s.seed,
            Self::Mixture(s) => s.seed,
        }
    }

    pub fn generate(&self) -> Result<TaskBundle, SynthError> {
        match self {
            Self::Pretrain(s) => gen_pretrain_task(s),
            Self::Architecture(s) => gen_arch_task(s),
            Self::Grpo(s) => gen_grpo_task(s),
            Self::Mixture(s) => gen_mixture_task(s),
        }
    }
}

/// Independent stream per experiment so experiments do not perturb each other.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn fidelity(level: Option<FidelityLevel>, meta: &[(&str, f64)]) -> FidelityTag {
    FidelityTag {
        metadata: meta.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        level,
    }
}

/// Builds a table from noiseless scores plus Gaussian noise with standard
/// deviation `noise` times the noiseless score range.
#[allow(clippy::too_many_arguments)]
pub(crate) fn noisy_table(
    id: &str,
    fid: FidelityTag,
    env_text: String,
    space: ConfigSpace,
    direction: Direction,
    points: Vec<(Configuration, f64)>,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ExperimentTable, SynthError> {
    let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let sigma = noise * (hi - lo);
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
    let rows = points
        .into_iter()
        .map(|(c, y)| {
            let eps = normal.as_ref().map_or(0.0, |n| n.sample(rng));
            (c, y + eps, BTreeMap::new())
        })
        .collect();
    Ok(ExperimentTable::new(id, fid, env_text, space, direction, rows)?)
}

pub(crate) fn check_tokens(dimension: &str, tokens: &[String], universe: &[&str]) -> Result<(), SynthError> {
    if tokens.is_empty() {
        return Err(SynthError::BadSpec(format!("`{dimension}` grid is empty")));
    }
    match tokens.iter().find(|t| !universe.contains(&t.as_str())) {
        Some(t) => Err(SynthError::InvalidGridToken {
            dimension: dimension.to_string(),
            token: t.clone(),
        }),
        None => Ok(()),
    }
}

pub(crate) fn base_metadata(generator: &str, form: &str, seed: u64) -> BTreeMap<String, serde_json::Value> {
    let mut m = BTreeMap::new();
    m.insert("synthetic".into(), serde_json::Value::Bool(true));
    m.insert("generator".into(), generator.into());
    m.insert("functional_form".into(), form.into());
    m.insert("seed".into(), seed.into());
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub task_id: String,
    pub sha256: String,
    pub spec: SynthSpec,
}

/// Provenance of a generated bundle directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub bundles: Vec<ManifestEntry>,
}

/// Generates each spec and writes `<task_id>.json` plus `manifest.json`
/// into `out`. Output bytes depend only on the specs.
pub fn write_bundles(specs: &[SynthSpec], out: &Path) -> Result<SynthManifest, GenError> {
    std::fs::create_dir_all(out)?;
    let mut manifest = SynthManifest::default();
    for spec in specs {
        let bundle = spec.generate()?;
        let text = write_bundle(&bundle);
        let file = format!("{}.json", bundle.task_id);
        std::fs::write(out.join(&file), &text)?;
        manifest.bundles.push(ManifestEntry {
            file,
            task_id: bundle.task_id.clone(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
            spec: spec.clone(),
        });
    }
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(out.join("manifest.json"), text)?;
    Ok(manifest)
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
