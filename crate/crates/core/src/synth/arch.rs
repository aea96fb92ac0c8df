use std::collections::HashSet;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::{base_metadata, fidelity, noisy_table, stream_rng, SynthError};
use crate::lookup::TaskBundle;
use crate::model::{canonicalize, ConfigSpace, Configuration, Dimension, Direction, FidelityLevel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchScale {
    pub name: String,
    pub label: String,
    pub embed: Vec<String>,
    pub layers: Vec<String>,
    pub heads: Vec<String>,
    pub mlp_ratio: Vec<String>,
    pub level: Option<FidelityLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSpec {
    pub seed: u64,
    pub candidates_per_scale: usize,
    pub scales: Vec<ArchScale>,
    pub noise: f64,
}

fn scale(name: &str, label: &str, e: [&str; 3], l: [&str; 3], h: [&str; 3], level: FidelityLevel) -> ArchScale {
    let v = |a: [&str; 3]| a.iter().map(|s| s.to_string()).collect();
    ArchScale {
        name: name.into(),
        label: label.into(),
        embed: v(e),
        layers: v(l),
        heads: v(h),
        mlp_ratio: v(["2", "3", "4"]),
        level: Some(level),
    }
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            candidates_per_scale: 40,
            scales: vec![
                scale("gpt-s", "Small", ["192", "384", "768"], ["10", "11", "12"], ["4", "8", "12"], FidelityLevel::Low),
                scale("gpt-m", "Medium", ["256", "512", "1024"], ["22", "23", "24"], ["8", "12", "16"], FidelityLevel::Medium),
                scale("gpt-l", "Large", ["320", "640", "1280"], ["34", "35", "36"], ["8", "16", "20"], FidelityLevel::High),
            ],
            noise: 0.01,
        }
    }
}

const FORM: &str = "u = normalized log(embed*layers*mean(mlp_ratio)) over the scale's grid extremes; \
perplexity = 18 + 12*(1-u)^2, latency = 0.1 + 2*u^2; score = minmax(perplexity) + minmax(latency) + noise";

fn parse(tokens: &[String]) -> Result<Vec<f64>, SynthError> {
    tokens
        .iter()
        .map(|t| t.parse::<f64>().map_err(|_| SynthError::BadSpec(format!("non-numeric token `{t}`"))))
        .collect()
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn check_disjoint(scales: &[ArchScale]) -> Result<(), SynthError> {
    for (i, a) in scales.iter().enumerate() {
        for b in &scales[i + 1..] {
            for (dim, xs, ys) in [
                ("sample_embed_dim", &a.embed, &b.embed),
                ("sample_n_layer", &a.layers, &b.layers),
            ] {
                if let Some(t) = xs.iter().find(|t| ys.contains(t)) {
                    return Err(SynthError::OverlappingGrids {
                        a: a.name.clone(),
                        b: b.name.clone(),
                        dimension: dim.into(),
                        token: t.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

fn space_text(s: &ArchScale) -> String {
    let list = |v: &[String]| v.join(", ");
    format!(
        "{} Transformer architecture search, configuration space: {{\"sample_embed_dim\": one from [{}], \"sample_n_layer\": one from [{}], \"sample_n_head\": for each layer, one from [{}], \"sample_mlp_ratio\": for each layer, one from [{}], \"sample_bias\": one from [\"True\", \"False\"]}}",
        s.label,
        list(&s.embed),
        list(&s.layers),
        list(&s.heads),
        list(&s.mlp_ratio)
    )
}

pub fn gen_arch_task(spec: &ArchSpec) -> Result<TaskBundle, SynthError> {
    if spec.scales.is_empty() || spec.candidates_per_scale == 0 {
        return Err(SynthError::BadSpec("need at least one scale and one candidate".into()));
    }
    check_disjoint(&spec.scales)?;
    let mut tables = Vec::new();
    for (i, s) in spec.scales.iter().enumerate() {
        let (e, l, m) = (parse(&s.embed)?, parse(&s.layers)?, parse(&s.mlp_ratio)?);
        parse(&s.heads)?;
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let c_lo = (min(&e) * min(&l) * min(&m)).ln();
        let c_hi = (max(&e) * max(&l) * max(&m)).ln();

        let dims = vec![
            Dimension::scalar("sample_embed_dim", &strs(&s.embed)),
            Dimension::scalar("sample_n_layer", &strs(&s.layers)),
            Dimension::per_layer("sample_n_head", &strs(&s.heads), "sample_n_layer"),
            Dimension::per_layer("sample_mlp_ratio", &strs(&s.mlp_ratio), "sample_n_layer"),
            Dimension::scalar("sample_bias", &["True", "False"]),
        ];
        let grid = ConfigSpace::grid(dims.clone())?;

        let mut rng = stream_rng(spec.seed, i as u64);
        let mut seen = HashSet::new();
        let mut candidates = Vec::new();
        let mut attempts = 0;
        while candidates.len() < spec.candidates_per_scale {
            attempts += 1;
            if attempts > spec.candidates_per_scale * 100 {
                return Err(SynthError::BadSpec(format!("cannot draw {} distinct candidates", spec.candidates_per_scale)));
            }
            let layers = s.layers.choose(&mut rng).expect("non-empty");
            let n: usize = layers.parse().map_err(|_| SynthError::BadSpec(format!("bad layer token `{layers}`")))?;
            let heads: Vec<&String> = (0..n).map(|_| s.heads.choose(&mut rng).expect("non-empty")).collect();
            let ratios: Vec<&String> = (0..n).map(|_| s.mlp_ratio.choose(&mut rng).expect("non-empty")).collect();
            let c = Configuration::new()
                .with_token("sample_embed_dim", s.embed.choose(&mut rng).expect("non-empty"))
                .with_token("sample_n_layer", layers)
                .with_list("sample_n_head", &heads)
                .with_list("sample_mlp_ratio", &ratios)
                .with_token("sample_bias", ["True", "False"].choose(&mut rng).expect("non-empty"));
            if seen.insert(canonicalize(&c, &grid)) {
                candidates.push(c);
            }
        }

        let capacity = |c: &Configuration| {
            let e: f64 = c.token("sample_embed_dim").unwrap().parse().unwrap();
            let l: f64 = c.token("sample_n_layer").unwrap().parse().unwrap();
            let Some(crate::model::Value::List(r)) = c.get("sample_mlp_ratio") else {
                unreachable!()
            };
            let mean = r.iter().map(|t| t.parse::<f64>().unwrap()).sum::<f64>() / r.len() as f64;
            ((e * l * mean).ln() - c_lo) / (c_hi - c_lo)
        };
        let ppl: Vec<f64> = candidates.iter().map(|c| 18.0 + 12.0 * (1.0 - capacity(c)).powi(2)).collect();
        let lat: Vec<f64> = candidates.iter().map(|c| 0.1 + 2.0 * capacity(c).powi(2)).collect();
        let norm = |v: &[f64], x: f64| {
            let (lo, hi) = (min(v), max(v));
            if hi > lo { (x - lo) / (hi - lo) } else { 0.0 }
        };
        let points = candidates
            .iter()
            .enumerate()
            .map(|(j, c)| (c.clone(), norm(&ppl, ppl[j]) + norm(&lat, lat[j])))
            .collect();

        let space = ConfigSpace::explicit(dims, candidates)?;
        let fid = fidelity(s.level, &[("scale", (i + 1) as f64)]);
        tables.push(noisy_table(&s.name, fid, space_text(s), space, Direction::Minimize, points, spec.noise, &mut rng)?);
    }
    let mut bundle = TaskBundle::new(
        "architecture",
        "Transformer architecture configuration: select a GPT-2 style architecture (embedding dimension, depth, per-layer heads and MLP ratios, bias) that minimizes the normalized sum of validation perplexity and latency.",
        Direction::Minimize,
        vec!["scale".into()],
        tables,
    )?;
    bundle.top_k = Some(5);
    bundle.metadata = base_metadata("synth.architecture", FORM, spec.seed);
    bundle.metadata.insert(
        "dimension_help".into(),
        serde_json::json!({
            "sample_embed_dim": "embedding dimension of the Transformer model",
            "sample_n_layer": "number of layers of the Transformer model",
            "sample_n_head": "number of attention heads in each layer (per-layer list)",
            "sample_mlp_ratio": "ratio of MLP dimension to embedding dimension (per-layer list)",
            "sample_bias": "whether to use bias in the MLP (\"True\"/\"False\" as a string)",
        }),
    );
    Ok(bundle)
}
