use serde::{Deserialize, Serialize};

use super::{base_metadata, check_tokens, fidelity, noisy_table, stream_rng, SynthError};
use crate::lookup::TaskBundle;
use crate::model::{ConfigSpace, Dimension, Direction, FidelityLevel};

/// Learning rates 2^-10.5 .. 2^-7.0 in the decimal notation of the prompts.
pub const PRETRAIN_LR_TOKENS: [&str; 8] = [
    "0.0006905", "0.0009766", "0.001381", "0.001953", "0.002762", "0.003906", "0.005524", "0.007812",
];
const LR_UNIVERSE: [&str; 12] = [
    "0.0002441", "0.0003453", "0.0004883", "0.0006905", "0.0009766", "0.001381", "0.001953",
    "0.002762", "0.003906", "0.005524", "0.007812", "0.01105",
];
pub const PRETRAIN_BS_TOKENS: [&str; 10] = ["32", "64", "128", "192", "256", "352", "512", "736", "1024", "2048"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainExperiment {
    /// Training tokens D.
    pub tokens: f64,
    /// Non-embedding parameters N.
    pub params: f64,
    pub level: Option<FidelityLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSpec {
    pub seed: u64,
    pub lr_tokens: Vec<String>,
    pub bs_tokens: Vec<String>,
    pub experiments: Vec<PretrainExperiment>,
    /// Noise standard deviation as a fraction of each table's score range.
    pub noise: f64,
    /// Exponent of N in the optimal learning rate (lr* falls with N).
    pub lr_param_exponent: f64,
    /// Exponent of D in the optimal learning rate.
    pub lr_token_exponent: f64,
    /// Exponent of D in the optimal batch size.
    pub bs_token_exponent: f64,
    pub lr_curvature: f64,
    pub bs_curvature: f64,
}

fn roster() -> Vec<PretrainExperiment> {
    use FidelityLevel::*;
    let row = |d: f64, n: f64, level| PretrainExperiment {
        tokens: d,
        params: n,
        level: Some(level),
    };
    vec![
        row(2e9, 268304384.0, Low),
        row(2e9, 429260800.0, Low),
        row(2e9, 536872960.0, Low),
        row(4e9, 59968512.0, Medium),
        row(4e9, 119992320.0, Medium),
        row(4e9, 268304384.0, Medium),
        row(4e9, 429260800.0, Medium),
        row(8e9, 59968512.0, Medium),
        row(8e9, 119992320.0, Medium),
        row(1e11, 214663680.0, High),
        row(8e10, 268304384.0, High),
        row(2e10, 536872960.0, High),
        row(2e10, 429260800.0, High),
        row(2e10, 268304384.0, High),
    ]
}

impl Default for PretrainSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            lr_tokens: PRETRAIN_LR_TOKENS.iter().map(|s| s.to_string()).collect(),
            bs_tokens: PRETRAIN_BS_TOKENS.iter().map(|s| s.to_string()).collect(),
            experiments: roster(),
            noise: 0.01,
            lr_param_exponent: 0.713,
            lr_token_exponent: 0.307,
            bs_token_exponent: 0.53,
            lr_curvature: 0.02,
            bs_curvature: 0.01,
        }
    }
}

impl PretrainSpec {
    /// Same roster with every optimum pinned: the no-shift control.
    pub fn no_shift(seed: u64) -> Self {
        Self {
            seed,
            lr_param_exponent: 0.0,
            lr_token_exponent: 0.0,
            bs_token_exponent: 0.0,
            ..Self::default()
        }
    }

    pub fn optimal_lr(&self, tokens: f64, params: f64) -> f64 {
        0.002 * (params / 2.68e8).powf(-self.lr_param_exponent) * (tokens / 8e9).powf(self.lr_token_exponent)
    }

    pub fn optimal_bs(&self, tokens: f64) -> f64 {
        128.0 * (tokens / 8e9).powf(self.bs_token_exponent)
    }
}

fn base_loss(tokens: f64, params: f64) -> f64 {
    1.69 + 406.4 / params.powf(0.34) + 410.7 / tokens.powf(0.28)
}

const FORM: &str = "loss = 1.69 + 406.4/N^0.34 + 410.7/D^0.28 + a*(log2 lr - log2 lr*)^2 + b*(log2 bs - log2 bs*)^2 + noise; \
lr* = 0.002*(N/2.68e8)^-alpha*(D/8e9)^beta, bs* = 128*(D/8e9)^gamma";

pub fn gen_pretrain_task(spec: &PretrainSpec) -> Result<TaskBundle, SynthError> {
    check_tokens("lr", &spec.lr_tokens, &LR_UNIVERSE)?;
    check_tokens("bs", &spec.bs_tokens, &PRETRAIN_BS_TOKENS)?;
    if spec.experiments.is_empty() {
        return Err(SynthError::BadSpec("no experiments".into()));
    }
    let lr: Vec<&str> = spec.lr_tokens.iter().map(String::as_str).collect();
    let bs: Vec<&str> = spec.bs_tokens.iter().map(String::as_str).collect();
    let space = ConfigSpace::grid(vec![Dimension::scalar("lr", &lr), Dimension::scalar("bs", &bs)])?;
    let grid = space.enumerate_grid().expect("scalar grid");

    let mut tables = Vec::new();
    for (i, exp) in spec.experiments.iter().enumerate() {
        let (d, n) = (exp.tokens, exp.params);
        let lr_star = spec.optimal_lr(d, n).log2();
        let bs_star = spec.optimal_bs(d).log2();
        let base = base_loss(d, n);
        let points = grid
            .iter()
            .map(|c| {
                let x: f64 = c.token("lr").unwrap().parse().expect("numeric lr token");
                let y: f64 = c.token("bs").unwrap().parse().expect("numeric bs token");
                let loss = base
                    + spec.lr_curvature * (x.log2() - lr_star).powi(2)
                    + spec.bs_curvature * (y.log2() - bs_star).powi(2);
                (c.clone(), loss)
            })
            .collect();
        let id = format!("d{}-n{}", d as u64, n as u64);
        let env = format!(
            "the total number of training tokens seen by the model during training is: {}, and the count of trainable model parameters excluding token embedding matrices is: {}",
            d as u64, n as u64
        );
        let fid = fidelity(exp.level, &[("tokens", d), ("params", n)]);
        let mut rng = stream_rng(spec.seed, i as u64);
        tables.push(noisy_table(&id, fid, env, space.clone(), Direction::Minimize, points, spec.noise, &mut rng)?);
    }

    let mut bundle = TaskBundle::new(
        "pretrain_hp",
        "Pretraining hyperparameter configuration: choose the peak learning rate and batch size for a model of N non-embedding parameters trained on D tokens. Both numbers influence the best learning rate and batch size. The target is the final smooth training loss.",
        Direction::Minimize,
        vec!["tokens".into(), "params".into()],
        tables,
    )?;
    bundle.top_k = Some(3);
    bundle.metadata = base_metadata("synth.pretrain", FORM, spec.seed);
    bundle.metadata.insert(
        "dimension_help".into(),
        serde_json::json!({"lr": "peak learning rate", "bs": "global batch size"}),
    );
    bundle.metadata.insert(
        "shift".into(),
        serde_json::json!({
            "lr_param_exponent": spec.lr_param_exponent,
            "lr_token_exponent": spec.lr_token_exponent,
            "bs_token_exponent": spec.bs_token_exponent,
        }),
    );
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::top_k;
    use crate::lookup::ExperimentTable;

    fn argmin_lr(t: &ExperimentTable) -> f64 {
        top_k(t, 1)[0].config.token("lr").unwrap().parse().unwrap()
    }

    #[test]
    fn larger_models_prefer_smaller_lr() {
        let spec = PretrainSpec {
            noise: 0.0,
            experiments: vec![
                PretrainExperiment { tokens: 2e10, params: 6e7, level: None },
                PretrainExperiment { tokens: 2e10, params: 5.4e8, level: None },
            ],
            ..PretrainSpec::default()
        };
        let b = gen_pretrain_task(&spec).unwrap();
        assert!(argmin_lr(&b.experiments[1]) <= argmin_lr(&b.experiments[0]));
        assert!(argmin_lr(&b.experiments[1]) < argmin_lr(&b.experiments[0]));
    }

    #[test]
    fn noiseless_argmin_is_nearest_token() {
        let spec = PretrainSpec {
            noise: 0.0,
            ..PretrainSpec::default()
        };
        let b = gen_pretrain_task(&spec).unwrap();
        for (exp, t) in spec.experiments.iter().zip(&b.experiments) {
            let star = spec.optimal_lr(exp.tokens, exp.params).log2();
            let nearest = PRETRAIN_LR_TOKENS
                .iter()
                .map(|s| s.parse::<f64>().unwrap())
                .min_by(|a, b| (a.log2() - star).abs().total_cmp(&(b.log2() - star).abs()))
                .unwrap();
            assert_eq!(argmin_lr(t), nearest, "{}", t.experiment_id);
        }
    }

    #[test]
    fn table11_roster_has_labeled_tiers() {
        let b = gen_pretrain_task(&PretrainSpec::default()).unwrap();
        let split = crate::curation::order_by_fidelity(&b).unwrap();
        assert_eq!((split.low.len(), split.medium.len(), split.high.len()), (3, 6, 5));
        assert!(split.high.contains(&"d20000000000-n536872960".to_string()));
    }

    #[test]
    fn bad_token_is_named() {
        let spec = PretrainSpec {
            lr_tokens: vec!["0.001953".into(), "0.0015".into()],
            ..PretrainSpec::default()
        };
        assert_eq!(
            gen_pretrain_task(&spec).unwrap_err(),
            SynthError::InvalidGridToken { dimension: "lr".into(), token: "0.0015".into() }
        );
    }
}
