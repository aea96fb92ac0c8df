use std::collections::HashSet;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{base_metadata, fidelity, noisy_table, stream_rng, SynthError};
use crate::lookup::TaskBundle;
use crate::model::{ConfigSpace, Configuration, Dimension, Direction, FidelityLevel};

/// Data-source column names, in array order.
pub const MIXTURE_DOMAINS: [&str; 19] = [
    "ratio_coconot_converted",
    "ratio_evol_codealpaca_heval_decontaminated",
    "ratio_flan_v2_converted",
    "ratio_no_robots_converted",
    "ratio_numinamath_tir_math_decontaminated",
    "ratio_oasst1_converted",
    "ratio_personahub_code_v2_34999",
    "ratio_personahub_ifdata_manual_seed_v3_29980",
    "ratio_personahub_math_v5_regen_149960",
    "ratio_tulu_hard_coded_repeated_10",
    "ratio_tulu_v3.9_aya_100k",
    "ratio_tulu_v3.9_open_math_2_gsm8k_50k",
    "ratio_tulu_v3.9_personahub_math_interm_algebra_20k",
    "ratio_tulu_v3.9_sciriff_10k",
    "ratio_tulu_v3.9_synthetic_finalresp_wildguardmixtrain_decontaminated_50k",
    "ratio_tulu_v3.9_table_gpt_5k",
    "ratio_tulu_v3.9_wildchat_100k",
    "ratio_tulu_v3.9_wildjailbreak_decontaminated_50k",
    "ratio_tulu-3-sft-personas-math-grade",
];

/// Resolution of a mixture ratio: 1e-4.
const UNITS: u32 = 10_000;

/// Decimal token for a ratio of `units` / 10000 ("0.0", "0.0108", "1.0").
pub fn mixture_token(units: u32) -> String {
    let s = (units as f64 / UNITS as f64).to_string();
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureTier {
    pub id: String,
    pub model: String,
    pub params: f64,
    pub level: FidelityLevel,
    /// Score of the ideal mixture.
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSpec {
    pub seed: u64,
    /// Number of domains, at most 19.
    pub domains: usize,
    pub candidates_per_tier: usize,
    pub tiers: Vec<MixtureTier>,
    /// Fraction of low and medium tier candidates kept (prefix of the draw order).
    pub coverage: f64,
    /// How far each tier's ideal mixture moves from the shared one, in [0, 1].
    pub ideal_shift: f64,
    /// Score lost per unit of Euclidean distance to the ideal mixture.
    pub curvature: f64,
    pub noise: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        let tier = |id: &str, model: &str, params: f64, level, peak| MixtureTier {
            id: id.into(),
            model: model.into(),
            params,
            level,
            peak,
        };
        Self {
            seed: 0,
            domains: MIXTURE_DOMAINS.len(),
            candidates_per_tier: 32,
            tiers: vec![
                tier("qwen2.5-500m", "Qwen2.5-0.5B", 5e8, FidelityLevel::Low, 0.31),
                tier("qwen2.5-3b", "Qwen2.5-3B", 3e9, FidelityLevel::Medium, 0.48),
                tier("qwen2.5-7b", "Qwen2.5-7B", 7e9, FidelityLevel::High, 0.56),
            ],
            coverage: 1.0,
            ideal_shift: 0.5,
            curvature: 1.0,
            noise: 0.01,
        }
    }
}

const FORM: &str = "score = peak - curvature*||pi - pi_tier||_2 + noise; \
pi_tier = (1-shift)*pi_shared + shift*pi_own, both Dirichlet(1) draws; candidates are Dirichlet(1) draws on a 1e-4 lattice";

fn dirichlet(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    let draws: Vec<f64> = (0..d).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Rounds a simplex point to the lattice and gives the rounding residue to
/// the largest component so the units sum exactly to one.
fn to_lattice(p: &[f64]) -> Vec<u32> {
    let mut units: Vec<i64> = p.iter().map(|x| (x * UNITS as f64).round() as i64).collect();
    let residue = UNITS as i64 - units.iter().sum::<i64>();
    let largest = (0..units.len()).max_by(|&a, &b| units[a].cmp(&units[b]).then(b.cmp(&a))).expect("non-empty");
    units[largest] += residue;
    units.into_iter().map(|u| u.max(0) as u32).collect()
}

fn as_config(units: &[u32]) -> Configuration {
    units
        .iter()
        .zip(MIXTURE_DOMAINS)
        .fold(Configuration::new(), |c, (u, name)| c.with_token(name, &mixture_token(*u)))
}

pub fn gen_mixture_task(spec: &MixtureSpec) -> Result<TaskBundle, SynthError> {
    let d = spec.domains;
    if !(2..=MIXTURE_DOMAINS.len()).contains(&d) {
        return Err(SynthError::BadSpec(format!("domains must be in 2..={}", MIXTURE_DOMAINS.len())));
    }
    if spec.tiers.is_empty() || spec.candidates_per_tier == 0 {
        return Err(SynthError::BadSpec("need at least one tier and one candidate".into()));
    }
    if !(spec.coverage > 0.0 && spec.coverage <= 1.0) {
        return Err(SynthError::BadSpec("coverage must be in (0, 1]".into()));
    }
    let n_tiers = spec.tiers.len() as u64;
    let shared = dirichlet(&mut stream_rng(spec.seed, 2 * n_tiers), d);

    let mut taken = HashSet::new();
    let mut tables = Vec::new();
    for (i, tier) in spec.tiers.iter().enumerate() {
        let mut rng = stream_rng(spec.seed, i as u64);
        let own = dirichlet(&mut stream_rng(spec.seed, n_tiers + i as u64), d);
        let ideal: Vec<f64> = shared
            .iter()
            .zip(&own)
            .map(|(s, o)| (1.0 - spec.ideal_shift) * s + spec.ideal_shift * o)
            .collect();

        let mut lattice = Vec::new();
        let mut attempts = 0;
        while lattice.len() < spec.candidates_per_tier {
            attempts += 1;
            if attempts > spec.candidates_per_tier * 100 {
                return Err(SynthError::BadSpec("cannot draw enough distinct mixtures".into()));
            }
            let units = to_lattice(&dirichlet(&mut rng, d));
            if taken.insert(units.clone()) {
                lattice.push(units);
            }
        }
        if tier.level != FidelityLevel::High {
            let keep = ((spec.candidates_per_tier as f64 * spec.coverage).round() as usize).max(1);
            lattice.truncate(keep);
        }

        let points: Vec<(Configuration, f64)> = lattice
            .iter()
            .map(|u| {
                let dist = u
                    .iter()
                    .zip(&ideal)
                    .map(|(&x, y)| (x as f64 / UNITS as f64 - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (as_config(u), tier.peak - spec.curvature * dist)
            })
            .collect();
        let dims = MIXTURE_DOMAINS[..d]
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let mut units: Vec<u32> = lattice.iter().map(|u| u[j]).collect();
                units.sort_unstable();
                units.dedup();
                let tokens: Vec<String> = units.into_iter().map(mixture_token).collect();
                let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
                Dimension::scalar(*name, &refs)
            })
            .collect();
        let space = ConfigSpace::explicit(dims, points.iter().map(|p| p.0.clone()).collect())?;
        let fid = fidelity(Some(tier.level), &[("params", tier.params)]);
        let env = format!("The base model is {}.", tier.model);
        let mut noise_rng = stream_rng(spec.seed, 3 * n_tiers + i as u64);
        tables.push(noisy_table(&tier.id, fid, env, space, Direction::Maximize, points, spec.noise, &mut noise_rng)?);
    }

    let mut bundle = TaskBundle::new(
        "data_mixture",
        "Data mixture configuration: optimize the training data mixture for instruction tuning by maximizing metric_avg_id+ood, the mean of in-distribution and out-of-distribution benchmark scores. A mixture is a vector of domain ratios on the probability simplex; choose exactly one of the candidate mixtures.",
        Direction::Maximize,
        vec!["params".into()],
        tables,
    )?;
    bundle.top_k = Some(5);
    bundle.metadata = base_metadata("synth.mixture", FORM, spec.seed);
    bundle.metadata.insert("coverage".into(), spec.coverage.into());
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::top_k;

    fn ratios(c: &Configuration) -> Vec<f64> {
        MIXTURE_DOMAINS.iter().map(|d| c.token(d).unwrap().parse::<f64>().unwrap()).collect()
    }

    #[test]
    fn tokens() {
        assert_eq!(mixture_token(0), "0.0");
        assert_eq!(mixture_token(108), "0.0108");
        assert_eq!(mixture_token(2090), "0.209");
        assert_eq!(mixture_token(10_000), "1.0");
    }

    #[test]
    fn candidates_lie_on_simplex() {
        let b = gen_mixture_task(&MixtureSpec::default()).unwrap();
        for t in &b.experiments {
            for r in t.records() {
                let v = ratios(&r.config);
                assert_eq!(v.len(), 19);
                assert!(v.iter().all(|x| *x >= 0.0));
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-6, "{}", r.key);
            }
        }
    }

    #[test]
    fn tiers_share_no_candidate() {
        let b = gen_mixture_task(&MixtureSpec::default()).unwrap();
        let mut all = HashSet::new();
        for t in &b.experiments {
            for r in t.records() {
                assert!(all.insert(r.key.clone()));
            }
        }
        assert_eq!(all.len(), 96);
    }

    #[test]
    fn coverage_shrinks_train_only() {
        let full = gen_mixture_task(&MixtureSpec::default()).unwrap();
        for (coverage, n) in [(0.2, 6), (0.4, 13), (1.0, 32)] {
            let b = gen_mixture_task(&MixtureSpec { coverage, ..MixtureSpec::default() }).unwrap();
            assert_eq!(b.experiments[0].len(), n);
            assert_eq!(b.experiments[1].len(), n);
            let scored = |t: &crate::lookup::ExperimentTable| -> Vec<(String, f64)> {
                t.records().iter().map(|r| (r.key.clone(), r.outcome.score)).collect()
            };
            assert_eq!(scored(&b.experiments[2]), scored(&full.experiments[2]));
            let full_keys: Vec<_> = full.experiments[1].records().iter().map(|r| &r.key).collect();
            assert!(b.experiments[1].records().iter().all(|r| full_keys.contains(&&r.key)));
        }
    }

    #[test]
    fn noiseless_argmax_is_closest_to_ideal() {
        let spec = MixtureSpec { noise: 0.0, ideal_shift: 0.0, ..MixtureSpec::default() };
        let b = gen_mixture_task(&spec).unwrap();
        let shared = dirichlet(&mut stream_rng(spec.seed, 6), 19);
        for t in &b.experiments {
            let dist = |c: &Configuration| {
                ratios(c).iter().zip(&shared).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            };
            let best = t.records().iter().min_by(|a, b| dist(&a.config).total_cmp(&dist(&b.config))).unwrap();
            assert_eq!(top_k(t, 1)[0].key, best.key);
        }
    }
}
