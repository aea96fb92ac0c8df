use serde::{Deserialize, Serialize};

use super::{base_metadata, fidelity, noisy_table, stream_rng, SynthError};
use crate::lookup::TaskBundle;
use crate::model::{ConfigSpace, Dimension, Direction, FidelityLevel};

const LR: [&str; 3] = ["1e-06", "5e-06", "1e-05"];
const MB: [&str; 3] = ["16", "32", "64"];
const KL: [&str; 2] = ["0", "0.001"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoExperiment {
    pub id: String,
    pub dataset: String,
    pub model: String,
    pub params: f64,
    pub samples: f64,
    pub epoch: f64,
    pub level: FidelityLevel,
    /// Score at the optimum.
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoSpec {
    pub seed: u64,
    pub experiments: Vec<GrpoExperiment>,
    pub noise: f64,
    /// Optimum location per tier in normalized index space `[lr, mb, kl]`.
    pub low_center: [f64; 3],
    pub medium_center: [f64; 3],
    pub high_center: [f64; 3],
    /// Put the train-tier optimum on the high tier's worst cell.
    pub reversed: bool,
}

fn exp(dataset: &str, model: &str, params: f64, samples: u32, epoch: u32, level: FidelityLevel, peak: f64) -> GrpoExperiment {
    let short = if params < 2e9 { "1.5b" } else { "3b" };
    let id = match level {
        FidelityLevel::High => format!("{dataset}-{samples}"),
        _ => format!("{dataset}-{short}-e{epoch}"),
    };
    GrpoExperiment {
        id,
        dataset: dataset.into(),
        model: model.into(),
        params,
        samples: samples as f64,
        epoch: epoch as f64,
        level,
        peak,
    }
}

impl Default for GrpoSpec {
    fn default() -> Self {
        use FidelityLevel::*;
        let small = "Qwen2.5-1.5B-Instruct";
        let big = "Qwen2.5-3B-Instruct";
        Self {
            seed: 0,
            experiments: vec![
                exp("mmlu_chemistry", small, 1.5e9, 256, 15, Low, 0.42),
                exp("mmlu_history", small, 1.5e9, 256, 15, Low, 0.47),
                exp("mmlu_physics", small, 1.5e9, 256, 15, Low, 0.39),
                exp("mmlu_chemistry", big, 3e9, 256, 15, Medium, 0.55),
                exp("mmlu_history", big, 3e9, 256, 15, Medium, 0.61),
                exp("mmlu_physics", big, 3e9, 256, 15, Medium, 0.52),
                exp("mmlu_math", big, 3e9, 256, 30, Medium, 0.58),
                exp("gsm8k", big, 3e9, 768, 30, High, 0.81),
                exp("gsm8k", big, 3e9, 1536, 30, High, 0.84),
                exp("dapo", big, 3e9, 768, 30, High, 0.36),
                exp("dapo", big, 3e9, 1536, 30, High, 0.40),
            ],
            noise: 0.01,
            low_center: [0.9, 0.3, 0.9],
            medium_center: [0.85, 0.3, 0.85],
            high_center: [0.2, 0.8, 0.1],
            reversed: false,
        }
    }
}

const WEIGHTS: [f64; 3] = [1.0, 0.6, 0.4];
const AMPLITUDE: f64 = 0.12;
const FORM: &str = "score = peak - 0.12*(1.0*(x_lr-c_lr)^2 + 0.6*(x_mb-c_mb)^2 + 0.4*(x_kl-c_kl)^2) + noise, \
x = grid index scaled to [0,1], c = tier center plus a small per-experiment offset";

fn coords(i: [usize; 3]) -> [f64; 3] {
    [i[0] as f64 / 2.0, i[1] as f64 / 2.0, i[2] as f64]
}

fn surface(center: [f64; 3], x: [f64; 3]) -> f64 {
    (0..3).map(|d| WEIGHTS[d] * (x[d] - center[d]).powi(2)).sum()
}

/// Grid cell farthest from `center` under the score surface.
fn worst_cell(center: [f64; 3]) -> [f64; 3] {
    let mut best = ([0.0; 3], f64::MIN);
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..2 {
                let x = coords([a, b, c]);
                let d = surface(center, x);
                if d > best.1 {
                    best = (x, d);
                }
            }
        }
    }
    best.0
}

pub fn gen_grpo_task(spec: &GrpoSpec) -> Result<TaskBundle, SynthError> {
    if spec.experiments.is_empty() {
        return Err(SynthError::BadSpec("no experiments".into()));
    }
    let space = ConfigSpace::grid(vec![
        Dimension::scalar("lr", &LR),
        Dimension::scalar("mb", &MB),
        Dimension::scalar("kl", &KL),
    ])?;
    let grid = space.enumerate_grid().expect("scalar grid");
    let train_center = |c: [f64; 3]| if spec.reversed { worst_cell(spec.high_center) } else { c };

    let mut tables = Vec::new();
    for (i, e) in spec.experiments.iter().enumerate() {
        let mut rng = stream_rng(spec.seed, i as u64);
        let base = match e.level {
            FidelityLevel::Low => train_center(spec.low_center),
            FidelityLevel::Medium => train_center(spec.medium_center),
            FidelityLevel::High => spec.high_center,
        };
        // Deterministic per-experiment offset, small enough to keep the cell.
        let shift = (i % 3) as f64 * 0.02 - 0.02;
        let center = [base[0] + shift, base[1] - shift, base[2]];
        let points = grid
            .iter()
            .map(|c| {
                let idx = [
                    LR.iter().position(|t| Some(*t) == c.token("lr")).unwrap(),
                    MB.iter().position(|t| Some(*t) == c.token("mb")).unwrap(),
                    KL.iter().position(|t| Some(*t) == c.token("kl")).unwrap(),
                ];
                (c.clone(), e.peak - AMPLITUDE * surface(center, coords(idx)))
            })
            .collect();
        let env = format!(
            "the dataset is {}, the model is {}, the training size is {}, Note the Training epoch is {}",
            e.dataset, e.model, e.samples, e.epoch
        );
        let fid = fidelity(
            Some(e.level),
            &[("params", e.params), ("samples", e.samples), ("epoch", e.epoch)],
        );
        let table = noisy_table(&e.id, fid, env, space.clone(), Direction::Maximize, points, spec.noise, &mut rng)?;
        tables.push(table.with_redact_terms(vec![e.dataset.clone()]));
    }
    let mut bundle = TaskBundle::new(
        "rl_grpo",
        "RL-GRPO tuning configuration: choose the learning rate, mini-batch size and KL weight of GRPO training. The target is the validation score; higher is better.",
        Direction::Maximize,
        vec!["params".into(), "samples".into(), "epoch".into()],
        tables,
    )?;
    bundle.top_k = Some(3);
    bundle.metadata = base_metadata("synth.grpo", FORM, spec.seed);
    bundle.metadata.insert("reversed".into(), spec.reversed.into());
    bundle.metadata.insert(
        "dimension_help".into(),
        serde_json::json!({
            "lr": "learning rate of the RL-GRPO training",
            "mb": "mini-batch size for the gradient update of the RL-GRPO training",
            "kl": "weight of the KL divergence of the RL-GRPO training",
        }),
    );
    Ok(bundle)
}
