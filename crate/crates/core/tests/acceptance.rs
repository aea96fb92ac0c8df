//! Acceptance suite. Runs every criterion, prints one pass/fail line per
//! criterion with its runtime against the limit, and exits non-zero when
//! any criterion fails or overruns.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_clamp)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use clap::Parser;
use http_body_util::BodyExt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use configym::baselines::{drive, ExhaustivePolicy, Policy, RandomPolicy, TopKWarmStart};
use configym::cli::{self, Cli};
use configym::cost::{cost_report, is_cost_effective, CostModelParams, CostScenario};
use configym::curation::{
    build_samples, order_by_fidelity, render_context, sample_for, RenderOptions, Role, TestDemoTiers,
};
use configym::episode::{
    group_advantages, init_episode, normalized_regret, outcome_reward, AdvantageParams, EpisodeOptions,
    RewardMode, Session, TaskBounds, Turn, TurnStatus,
};
use configym::lookup::{longest_common_substring_len, match_most_similar, ExperimentTable, ParseQuality, TaskBundle};
use configym::model::{ConfigSpace, Configuration, Dimension, Direction, FidelityTag};
use configym::proposal::render_proposal;
use configym::protocol::{run_episode_with_agent, RunOptions, ScriptedAgent, ScriptedAgentSpec};
use configym::runner::{load_bundles, plan, RunManifest, Runner};
use configym::server::{router, AppState};
use configym::synth::{
    gen_arch_task, gen_grpo_task, gen_mixture_task, gen_pretrain_task, ArchSpec, GrpoSpec, MixtureSpec,
    PretrainSpec, SynthSpec,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------- helpers

fn all_bundles(seed: u64) -> Vec<TaskBundle> {
    ["pretrain", "architecture", "grpo", "mixture"]
        .iter()
        .map(|t| SynthSpec::default_for(t, seed).unwrap().generate().unwrap())
        .collect()
}

fn tables_of<'b>(bundle: &'b TaskBundle, ids: &[String]) -> Vec<&'b ExperimentTable> {
    ids.iter().map(|id| bundle.experiment(id).unwrap()).collect()
}

fn argmin_key(table: &ExperimentTable) -> String {
    table
        .records()
        .iter()
        .min_by(|a, b| a.outcome.utility().total_cmp(&b.outcome.utility()).then_with(|| b.key.cmp(&a.key)))
        .unwrap()
        .key
        .clone()
}

// ------------------------------------------------------ 1. reward formula

fn oracle_reward(turns: &[Turn], bounds: TaskBounds, budget: usize, mode: RewardMode) -> f64 {
    if turns.len() != budget {
        return -1.0;
    }
    for (i, a) in turns.iter().enumerate() {
        let counts = a.status == TurnStatus::Valid || (a.status == TurnStatus::Matched && mode == RewardMode::Lenient);
        if !counts {
            return -1.0;
        }
        for b in &turns[..i] {
            if a.canonical == b.canonical {
                return -1.0;
            }
        }
    }
    if bounds.y_best == bounds.y_worst {
        return 0.0;
    }
    let t = budget as f64;
    let mut sum = 0.0;
    for turn in turns {
        sum += turn.utility.unwrap();
    }
    let r = -(t * bounds.y_best - sum) / (t * bounds.y_best - t * bounds.y_worst);
    r.max(-1.0).min(0.0)
}

fn synthetic_turn(key: usize, utility: f64, status: TurnStatus) -> Turn {
    let executed = status != TurnStatus::Invalid;
    Turn {
        raw: format!("c{key}"),
        canonical: executed.then(|| format!("k{key}")),
        score: executed.then_some(utility),
        utility: executed.then_some(utility),
        details: BTreeMap::new(),
        matched: status == TurnStatus::Matched,
        parsed: true,
        status,
    }
}

fn reward_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut zeros = 0;
    for case in 0..10_000 {
        // Dyadic utilities make every sum exact, so "equals 0" is decidable.
        let dyadic = case % 2 == 0;
        let n = rng.random_range(1..=8);
        let mut utils: Vec<f64> = (0..n)
            .map(|_| {
                if dyadic {
                    rng.random_range(-512..=512) as f64 / 256.0
                } else {
                    rng.random_range(-3.0..3.0)
                }
            })
            .collect();
        let yb = utils.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if rng.random_bool(0.4) {
            // Ties at the optimum make an all-best trajectory reachable.
            for u in utils.iter_mut() {
                if rng.random_bool(0.6) {
                    *u = yb;
                }
            }
        }
        let yw = utils.iter().cloned().fold(f64::INFINITY, f64::min);
        let bounds = TaskBounds { y_best: yb, y_worst: yw };
        let budget = rng.random_range(1..=n.min(6));
        let len = if rng.random_bool(0.9) { budget } else { rng.random_range(0..=budget) };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let turns: Vec<Turn> = (0..len)
            .map(|i| {
                let key = if rng.random_bool(0.85) { order[i % n] } else { rng.random_range(0..n) };
                let status = match rng.random_range(0..20) {
                    0 => TurnStatus::Invalid,
                    1 => TurnStatus::Matched,
                    _ => TurnStatus::Valid,
                };
                synthetic_turn(key, utils[key], status)
            })
            .collect();

        for mode in [RewardMode::Strict, RewardMode::Lenient] {
            let r = outcome_reward(&turns, bounds, budget, mode);
            let o = oracle_reward(&turns, bounds, budget, mode);
            ensure!((-1.0..=0.0).contains(&r), "case {case}: reward {r} outside [-1, 0]");
            ensure!(r == o, "case {case} {mode:?}: reward {r} but oracle {o}");

            let keys: Vec<_> = turns.iter().map(|t| &t.canonical).collect();
            let repeat = (0..keys.len()).any(|i| keys[..i].contains(&keys[i]));
            let bad = turns.iter().any(|t| match mode {
                RewardMode::Strict => t.status != TurnStatus::Valid,
                RewardMode::Lenient => t.status == TurnStatus::Invalid,
            });
            if repeat || bad || len != budget {
                ensure!(r == -1.0, "case {case}: repeat/invalid trajectory scored {r}");
            }
            if dyadic && yb != yw {
                let all_best = !repeat && !bad && len == budget && turns.iter().all(|t| t.utility == Some(yb));
                ensure!((r == 0.0) == all_best, "case {case}: reward {r}, all-distinct-valid-at-best {all_best}");
                zeros += all_best as usize;
            }
        }
    }
    ensure!(zeros > 100, "only {zeros} zero-reward trajectories exercised");
    Ok(format!("10000 trajectories, {zeros} optimal"))
}

// ---------------------------------------------------------- 2. advantages

fn advantage_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let eps = AdvantageParams::default().epsilon;
    let mut shifted = 0;
    for case in 0..2_000 {
        let g = rng.random_range(1..=64);
        let rewards: Vec<f64> = (0..g).map(|_| rng.random_range(-1.0..=0.0)).collect();
        let adv = group_advantages(&rewards, AdvantageParams::default());
        ensure!(adv.len() == g, "case {case}: {} advantages for {g} rewards", adv.len());
        if g > 1 {
            let n = g as f64;
            let mean = rewards.iter().rev().fold(0.0, |s, r| s + r) / n;
            let var = rewards.iter().rev().fold(0.0, |s, r| s + (r - mean) * (r - mean)) / n;
            let std = var.sqrt();
            for (a, r) in adv.iter().zip(&rewards) {
                let want = (r - mean) / (std + eps);
                ensure!((a - want).abs() <= 1e-12, "case {case}: advantage {a} vs direct {want}");
            }
            if std > 1e-3 {
                let c = rng.random_range(-5.0..5.0);
                let moved: Vec<f64> = rewards.iter().map(|r| r + c).collect();
                let adv2 = group_advantages(&moved, AdvantageParams::default());
                for (a, b) in adv.iter().zip(&adv2) {
                    ensure!((a - b).abs() <= 1e-9, "case {case}: shift by {c} moved {a} to {b}");
                }
                shifted += 1;
            }
        } else {
            ensure!(adv == vec![0.0], "case {case}: singleton group gave {adv:?}");
        }
        let flat = vec![rewards[0]; rng.random_range(1..=64)];
        let zero = group_advantages(&flat, AdvantageParams::default());
        ensure!(zero.iter().all(|&a| a == 0.0), "case {case}: constant group {} gave {zero:?}", rewards[0]);
    }
    for v in [0.1, -1.0 / 3.0, -0.7] {
        let zero = group_advantages(&[v; 3], AdvantageParams::default());
        ensure!(zero == vec![0.0; 3], "constant group of {v} gave {zero:?}");
    }
    Ok(format!("2000 groups, {shifted} shift checks"))
}

// --------------------------------------------------------- 3. LCS/matching

fn lcs_oracle(a: &str, b: &str) -> usize {
    let mut best = 0;
    for i in 0..a.len() {
        for j in (i + best + 1)..=a.len() {
            if b.contains(&a[i..j]) {
                best = j - i;
            }
        }
    }
    best
}

fn random_text(rng: &mut ChaCha8Rng, alphabet: &[u8], max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())] as char).collect()
}

fn oracle_match<'t>(table: &'t ExperimentTable, query: &str) -> &'t str {
    let best = table.records().iter().map(|r| lcs_oracle(query, &r.key)).max().unwrap();
    table
        .records()
        .iter()
        .filter(|r| lcs_oracle(query, &r.key) == best)
        .map(|r| r.key.as_str())
        .min()
        .unwrap()
}

fn tie_table(rows: &[(&str, f64)]) -> ExperimentTable {
    let tokens: Vec<&str> = rows.iter().map(|r| r.0).collect();
    let space = ConfigSpace::grid(vec![Dimension::scalar("opt", &tokens)]).unwrap();
    let rows = rows
        .iter()
        .map(|(t, s)| (Configuration::new().with_token("opt", t), *s, BTreeMap::new()))
        .collect();
    ExperimentTable::new("ties", FidelityTag::default(), "", space, Direction::Maximize, rows).unwrap()
}

fn lcs_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let alphabets: [&[u8]; 3] = [b"ab", b"abc", b"abcdefghij=;[],"];
    for case in 0..1_000 {
        let alpha = alphabets[case % 3];
        let a = random_text(&mut rng, alpha, 40);
        let b = random_text(&mut rng, alpha, 40);
        let (got, want) = (longest_common_substring_len(&a, &b), lcs_oracle(&a, &b));
        ensure!(got == want, "LCS({a:?}, {b:?}) = {got}, oracle {want}");
        ensure!(longest_common_substring_len(&b, &a) == got, "LCS not symmetric on {a:?}, {b:?}");
    }

    let mut identities = 0;
    for bundle in all_bundles(0) {
        for table in &bundle.experiments {
            for r in table.records() {
                for text in [render_proposal(&r.config, &table.space), r.key.clone()] {
                    let m = match_most_similar(table, &text);
                    ensure!(
                        !m.matched && m.record.key == r.key,
                        "{}/{}: `{text}` resolved to `{}` (matched {})",
                        bundle.task_id,
                        table.experiment_id,
                        m.record.key,
                        m.matched
                    );
                    identities += 1;
                }
            }
        }
    }

    let rows = [("adam", 0.3), ("adamw", 0.9), ("sgd", 0.1), ("rmsprop", 0.5), ("lion", 0.7)];
    for (query, want) in [("zzz", "opt=adam"), ("opt=", "opt=adam"), ("am", "opt=adam"), ("xxpropxx", "opt=rmsprop")] {
        let mut chosen = BTreeSet::new();
        for perm in 0..10 {
            let mut shuffled = rows.to_vec();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm));
            let t = tie_table(&shuffled);
            let m = match_most_similar(&t, query);
            ensure!(m.matched, "tie query `{query}` was not flagged as matched");
            ensure!(m.record.key == oracle_match(&t, &m.query_text), "tie query `{query}` disagrees with oracle");
            chosen.insert(m.record.key.clone());
        }
        ensure!(
            chosen.len() == 1 && chosen.contains(want),
            "tie query `{query}` chose {chosen:?}, want {want}"
        );
    }

    let grpo = gen_grpo_task(&GrpoSpec::default()).unwrap();
    let table = &grpo.experiments[0];
    let mut rows: Vec<_> = table
        .records()
        .iter()
        .map(|r| (r.config.clone(), r.outcome.score, r.outcome.details.clone()))
        .collect();
    rows.shuffle(&mut rng);
    let reordered = ExperimentTable::new(
        table.experiment_id.clone(),
        table.fidelity.clone(),
        table.env_text.clone(),
        table.space.clone(),
        table.direction(),
        rows,
    )
    .unwrap();
    for _ in 0..300 {
        let raw = random_text(&mut rng, b"lrmbk=;:{}'0123456789.e-, ", 30);
        let m = match_most_similar(table, &raw);
        if m.parse == ParseQuality::Unparsed {
            ensure!(m.query_text == raw.trim(), "unparsed query text differs from the raw input");
        }
        if m.matched {
            let want = oracle_match(table, &m.query_text);
            ensure!(m.record.key == want, "`{raw}` matched `{}`, oracle `{want}`", m.record.key);
        }
        let again = match_most_similar(&reordered, &raw);
        ensure!(again.record.key == m.record.key, "`{raw}` depends on record order");
    }
    Ok(format!("1000 LCS pairs, {identities} identity lookups"))
}

// ------------------------------------------------------ 4. densification

fn densification_suite() -> Outcome {
    let bundle = gen_grpo_task(&GrpoSpec::default()).unwrap();
    let split = order_by_fidelity(&bundle).unwrap();
    let k = bundle.top_k.unwrap_or(3);
    let episodes = 500;
    let mut collapsed = [0usize; 2];
    for seed in 0..episodes {
        let target = &split.high[seed as usize % split.high.len()];
        let table = bundle.experiment(target).unwrap();
        let sample = sample_for(&bundle, target, 1, k, TestDemoTiers::Medium).unwrap();
        for (i, (matching, mode)) in [(false, RewardMode::Strict), (true, RewardMode::Lenient)].into_iter().enumerate() {
            let spec = ScriptedAgentSpec::NoisyFormat { p: 0.32, seed };
            let mut agent = ScriptedAgent::new(&spec, table);
            let opts = RunOptions {
                episode_id: format!("fig7-{seed}"),
                episode: EpisodeOptions {
                    matching,
                    reward_mode: mode,
                    method: "scripted_noisy_format".into(),
                    seed: Some(seed),
                    wall_clock: false,
                },
                ..RunOptions::default()
            };
            let run = run_episode_with_agent(&mut agent, &sample, &bundle, &opts).map_err(|e| e.to_string())?;
            ensure!(!run.summary.aborted, "seed {seed}: episode aborted");
            collapsed[i] += (run.summary.reward == -1.0) as usize;
        }
    }
    let off = collapsed[0] as f64 / episodes as f64;
    let on = collapsed[1] as f64 / episodes as f64;
    ensure!((off - 0.32).abs() <= 0.04, "matching off: {:.1}% at -1, want 32% ± 4%", off * 100.0);
    ensure!(on < 0.05, "matching on: {:.1}% at -1, want < 5%", on * 100.0);
    Ok(format!("-1 share: off {:.1}%, on {:.1}%", off * 100.0, on * 100.0))
}

// ------------------------------------------------------- 5. regret/oracle

fn regret_suite() -> Outcome {
    let mut bundles = all_bundles(0);
    bundles.extend(all_bundles(1));
    bundles.push(gen_pretrain_task(&PretrainSpec::no_shift(0)).unwrap());
    bundles.push(gen_grpo_task(&GrpoSpec { reversed: true, ..GrpoSpec::default() }).unwrap());
    let mut exhaustive = 0;
    for bundle in &bundles {
        for table in &bundle.experiments {
            let id = &table.experiment_id;
            let mut s = Session::start(bundle, id, table.len(), "exhaustive", EpisodeOptions::default())
                .map_err(|e| e.to_string())?;
            let summary = drive(&mut ExhaustivePolicy, &mut s, table).map_err(|e| e.to_string())?;
            ensure!(summary.regret == 0.0, "{}/{id}: exhaustive regret {}", bundle.task_id, summary.regret);
            exhaustive += 1;

            let bounds = TaskBounds::from_table(table);
            ensure!(normalized_regret(&[], bounds) == 1.0, "{}/{id}: empty history regret != 1", bundle.task_id);
            let budget = table.len().min(20);
            let mut s = Session::start(bundle, id, budget, "random", EpisodeOptions::default()).map_err(|e| e.to_string())?;
            drive(&mut RandomPolicy::new(exhaustive as u64), &mut s, table).map_err(|e| e.to_string())?;
            let history = &s.state().history;
            let mut prev = 1.0;
            for t in 0..=history.len() {
                let r = normalized_regret(&history[..t], bounds);
                ensure!((0.0..=1.0).contains(&r), "{}/{id}: regret {r} outside [0, 1]", bundle.task_id);
                ensure!(r <= prev, "{}/{id}: regret rose from {prev} to {r} at turn {t}", bundle.task_id);
                prev = r;
            }
        }
    }
    Ok(format!("{exhaustive} experiments"))
}

// --------------------------------------------------- 6. baseline ordering

fn baseline_suite() -> Outcome {
    let bundle = gen_pretrain_task(&PretrainSpec::no_shift(0)).unwrap();
    let split = order_by_fidelity(&bundle).unwrap();
    let k = bundle.top_k.unwrap_or(5);
    let episodes = 1_000u64;
    let mut regret = [0.0f64; 2];
    for seed in 0..episodes {
        let target = &split.high[seed as usize % split.high.len()];
        let table = bundle.experiment(target).unwrap();
        let sample = sample_for(&bundle, target, 1, k, TestDemoTiers::Medium).unwrap();
        let demos: Vec<&ExperimentTable> = sample.demos.iter().map(|d| bundle.experiment(&d.experiment_id).unwrap()).collect();
        let policies: [Box<dyn Policy>; 2] = [Box::new(TopKWarmStart::new(table, &demos, k, seed)), Box::new(RandomPolicy::new(seed))];
        for (i, mut p) in policies.into_iter().enumerate() {
            let mut s = Session::start(&bundle, target, 1, "b", EpisodeOptions::default()).map_err(|e| e.to_string())?;
            regret[i] += drive(p.as_mut(), &mut s, table).map_err(|e| e.to_string())?.regret;
        }
    }
    let (ws, rs) = (regret[0] / episodes as f64, regret[1] / episodes as f64);
    ensure!(ws < rs, "no-shift pretrain: warm start regret {ws:.4} is not below random {rs:.4}");

    let arch = gen_arch_task(&ArchSpec::default()).unwrap();
    let split = order_by_fidelity(&arch).unwrap();
    ensure!(split.high == ["gpt-l"], "architecture test tier is {:?}", split.high);
    let table = arch.experiment("gpt-l").unwrap();
    for test_demos in [TestDemoTiers::Medium, TestDemoTiers::MediumAndLow] {
        let sample = sample_for(&arch, "gpt-l", 5, 5, test_demos).unwrap();
        ensure!(!sample.demos.is_empty(), "gpt-l sample carries no demos");
        let demos: Vec<&ExperimentTable> = sample.demos.iter().map(|d| arch.experiment(&d.experiment_id).unwrap()).collect();
        for seed in 0..20 {
            let ws = TopKWarmStart::new(table, &demos, 5, seed);
            ensure!(ws.ranked().is_empty(), "{} demo configs validate on gpt-l", ws.ranked().len());
            let mut a = Session::start(&arch, "gpt-l", 5, "x", EpisodeOptions::default()).unwrap();
            let mut b = a.clone();
            drive(&mut ws.clone(), &mut a, table).map_err(|e| e.to_string())?;
            drive(&mut RandomPolicy::new(seed), &mut b, table).map_err(|e| e.to_string())?;
            ensure!(a.state().history == b.state().history, "seed {seed}: warm start did not fall back to random");
        }
    }
    Ok(format!("regret warm start {ws:.4} < random {rs:.4}; gpt-l falls back"))
}

// --------------------------------------------------- 7. shift certification

fn keys_of(tables: &[&ExperimentTable]) -> HashSet<String> {
    let mut keys = HashSet::new();
    for t in tables {
        keys.extend(t.records().iter().map(|r| r.key.clone()));
        keys.extend(t.space.candidates().iter().map(|c| configym::model::canonicalize(c, &t.space)));
    }
    keys
}

fn shift_suite() -> Outcome {
    for seed in 0..5 {
        let space_shift = [
            gen_arch_task(&ArchSpec { seed, ..ArchSpec::default() }).unwrap(),
            gen_mixture_task(&MixtureSpec { seed, ..MixtureSpec::default() }).unwrap(),
        ];
        for b in &space_shift {
            let split = order_by_fidelity(b).unwrap();
            let train: Vec<String> = split.low.iter().chain(&split.medium).cloned().collect();
            let train_keys = keys_of(&tables_of(b, &train));
            let test_keys = keys_of(&tables_of(b, &split.high));
            ensure!(!test_keys.is_empty(), "{} seed {seed}: empty test tier", b.task_id);
            let shared = train_keys.intersection(&test_keys).count();
            ensure!(shared == 0, "{} seed {seed}: {shared} candidates shared by train and test", b.task_id);
        }
    }

    for seed in 0..10 {
        let landscape_shift = [
            gen_pretrain_task(&PretrainSpec { seed, ..PretrainSpec::default() }).unwrap(),
            gen_grpo_task(&GrpoSpec { seed, ..GrpoSpec::default() }).unwrap(),
        ];
        for b in &landscape_shift {
            let first = b.experiments[0].space.dimensions();
            ensure!(
                b.experiments.iter().all(|e| e.space.dimensions() == first),
                "{} seed {seed}: spaces differ across experiments",
                b.task_id
            );
            let split = order_by_fidelity(b).unwrap();
            let argmax = |ids: &[String]| -> BTreeSet<String> {
                tables_of(b, ids).iter().map(|t| t.argmax_keys()[0].to_string()).collect()
            };
            let train: Vec<String> = split.low.iter().chain(&split.medium).cloned().collect();
            let (tr, te) = (argmax(&train), argmax(&split.high));
            ensure!(tr.is_disjoint(&te), "{} seed {seed}: train optima {tr:?} overlap test optima {te:?}", b.task_id);
        }

        let rev = gen_grpo_task(&GrpoSpec { seed, reversed: true, ..GrpoSpec::default() }).unwrap();
        let split = order_by_fidelity(&rev).unwrap();
        let train: Vec<String> = split.low.iter().chain(&split.medium).cloned().collect();
        for m in tables_of(&rev, &train) {
            for h in tables_of(&rev, &split.high) {
                let (best, worst) = (m.argmax_keys()[0].to_string(), argmin_key(h));
                ensure!(
                    best == worst,
                    "reversed seed {seed}: {} argmax {best} != {} argmin {worst}",
                    m.experiment_id,
                    h.experiment_id
                );
            }
        }
    }
    Ok("space, landscape and reversed shifts hold".into())
}

// -------------------------------------------------------------- 8. cost

fn cost_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut effective = 0;
    for case in 0..10_000 {
        let (k, m) = (rng.random_range(0..=300u64), rng.random_range(0..=60u64));
        let e_m = rng.random_range(0..=500i64);
        let s_base = rng.random_range(0..=20i64);
        let s_meta = rng.random_range(0..=20i64);
        let t_hf = rng.random_range(0..=500i64);
        let t_lf = rng.random_range(1..=50i64);
        let p = CostModelParams {
            k,
            m,
            e_m: e_m as f64,
            s_base: s_base as f64,
            s_meta: s_meta as f64,
            t_hf: t_hf as f64,
            t_lf: t_lf as f64,
        };
        let (ki, mi) = (k as i128, m as i128);
        let c_base = ki * s_base as i128 * t_hf as i128;
        let c_meta = mi * e_m as i128 * t_lf as i128 + ki * s_meta as i128 * t_hf as i128;
        let cheaper = c_meta < c_base;
        let r = cost_report(&p).map_err(|e| e.to_string())?;
        ensure!(r.c_base == c_base as f64 && r.c_meta == c_meta as f64, "case {case}: costs {} / {}", r.c_base, r.c_meta);
        ensure!(r.cost_effective == cheaper && is_cost_effective(&p) == cheaper, "case {case}: effective {} vs {cheaper}", r.cost_effective);
        let rate = (s_base - s_meta) as i128 * t_hf as i128;
        let upfront = mi * e_m as i128 * t_lf as i128;
        let critical = (rate > 0).then(|| (upfront / rate + 1) as u64);
        ensure!(r.critical_k == critical, "case {case}: critical K {:?}, oracle {critical:?}", r.critical_k);
        if let (Some(lev), Some(thr)) = (r.leverage_ratio, r.threshold) {
            if lev > thr {
                ensure!(cheaper, "case {case}: leverage {lev} > threshold {thr} but not cheaper");
            } else if lev < thr {
                ensure!(!cheaper, "case {case}: leverage {lev} < threshold {thr} but cheaper");
            }
        }
        effective += cheaper as usize;
    }

    let worked = CostModelParams { k: 5, m: 4, e_m: 100.0, s_base: 3.0, s_meta: 1.0, t_hf: 50.0, t_lf: 1.0 };
    let r = cost_report(&worked).map_err(|e| e.to_string())?;
    ensure!(r.delta_s == 2.0 && r.alpha == 50.0, "worked example: ΔS {} α {}", r.delta_s, r.alpha);
    ensure!(r.critical_k == Some(5) && r.cost_effective, "worked example: critical K {:?}", r.critical_k);

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/cost_calibration.json");
    let scenario: CostScenario = serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure!(scenario.synthetic, "calibration scenario must be labeled synthetic");
    ensure!(scenario.params.k == 30, "calibration scenario K is {}", scenario.params.k);
    let r = cost_report(&scenario.params).map_err(|e| e.to_string())?;
    let ratio = r.c_base / r.c_meta;
    ensure!((ratio - 3.6).abs() < 1e-12, "calibration ratio {ratio}, want 3.6");
    Ok(format!("10000 draws ({effective} effective), calibration {ratio}x"))
}

// ---------------------------------------------------------- 9. curation

fn curation_suite() -> Outcome {
    let pretrain = gen_pretrain_task(&PretrainSpec::default()).unwrap();
    let split = order_by_fidelity(&pretrain).unwrap();
    let shape = (split.low.len(), split.medium.len(), split.high.len());
    ensure!(shape == (3, 6, 5), "pretrain split {shape:?}, want (3, 6, 5)");
    let budgets = [1, 2, 3, 4, 5];
    for (tiers, test_blocks) in [(TestDemoTiers::Medium, 6), (TestDemoTiers::MediumAndLow, 9)] {
        let samples = build_samples(&pretrain, &split, 3, &budgets, tiers).map_err(|e| e.to_string())?;
        let train: Vec<_> = samples.iter().filter(|s| s.role == Role::Train).collect();
        let test: Vec<_> = samples.iter().filter(|s| s.role == Role::Test).collect();
        ensure!(train.len() == 30 && test.len() == 25, "{} train / {} test samples", train.len(), test.len());
        ensure!(train.iter().all(|s| s.demos.len() == 3), "train samples must carry 3 demo blocks");
        ensure!(test.iter().all(|s| s.demos.len() == test_blocks), "test samples must carry {test_blocks} demo blocks");
        ensure!(samples.iter().all(|s| s.demos.iter().all(|d| d.configs.len() == 3)), "demo blocks must hold Top-3");
    }

    let grpo = gen_grpo_task(&GrpoSpec::default()).unwrap();
    let split = order_by_fidelity(&grpo).unwrap();
    let grid = "{'lr': [1e-06, 5e-06, 1e-05], 'mb': [16, 32, 64], 'kl': [0, 0.001]}";
    for s in build_samples(&grpo, &split, 3, &budgets, TestDemoTiers::Medium).map_err(|e| e.to_string())? {
        let text = render_context(&s, &grpo, RenderOptions::default());
        ensure!(text.contains(grid), "{}: prompt lacks the exact grid", s.target);
        ensure!(text.contains("Top3"), "{}: prompt lacks the Top3 header", s.target);
        let blocks = text.matches("the Top-3 configurations are:").count();
        ensure!(blocks == s.demos.len(), "{}: {blocks} demo blocks rendered, {} expected", s.target, s.demos.len());
    }

    let mut prompts = 0;
    for bundle in all_bundles(0).iter().chain(all_bundles(3).iter()) {
        let split = order_by_fidelity(bundle).unwrap();
        for tiers in [TestDemoTiers::Medium, TestDemoTiers::MediumAndLow] {
            let samples = build_samples(bundle, &split, 3, &budgets, tiers).map_err(|e| e.to_string())?;
            for s in samples {
                let text = render_context(&s, bundle, RenderOptions::default());
                let hidden: Vec<String> = match s.role {
                    Role::Train => split.medium.iter().chain(&split.high).cloned().collect(),
                    Role::Test => split.high.clone(),
                };
                for t in tables_of(bundle, &hidden) {
                    for r in t.records() {
                        let score = r.outcome.score;
                        for needle in [format!("{score}"), format!("{score:.6}")] {
                            ensure!(
                                !text.contains(&needle),
                                "{} prompt for {} leaks score {needle} of {}",
                                bundle.task_id,
                                s.target,
                                t.experiment_id
                            );
                        }
                    }
                }
                prompts += 1;
            }
        }
    }
    Ok(format!("counts hold; {prompts} prompts scanned"))
}

// ------------------------------------------------------- 10. determinism

fn cli(args: &[&str]) -> Result<String, String> {
    let parsed = Cli::try_parse_from(std::iter::once("configym").chain(args.iter().copied())).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    cli::run(&parsed, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

async fn http(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn determinism_suite() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let bundles = root.join("bundles");
    cli(&["gen", "--task", "all", "--seed", "0", "--out", bundles.to_str().unwrap()])?;
    let bundle_paths: Vec<PathBuf> = ["rl_grpo.json", "pretrain_hp.json"].iter().map(|f| bundles.join(f)).collect();
    let manifest = json!({
        "bundles": bundle_paths,
        "policies": ["random", "topk_warmstart", "exhaustive", "greedy_local"],
        "scripted_agent": {"kind": "noisy_format", "p": 0.32, "seed": 0},
        "budgets": [1, 3],
        "seeds": [0, 1],
        "out": root.join("unused"),
    });
    let manifest_path = root.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap()).map_err(|e| e.to_string())?;

    let mut logs = Vec::new();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(format!("logs_{run}"));
        let rep = root.join(format!("report_{run}"));
        let line = cli(&["run", "--manifest", manifest_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "4"])?;
        ensure!(line.contains("failed 0") && !line.contains("written 0"), "run {run}: {}", line.trim());
        let tsv = cli(&["report", "--logs", out.to_str().unwrap(), "--out", rep.to_str().unwrap()])?;
        logs.push(dir_bytes(&out));
        reports.push((tsv, dir_bytes(&rep)));
    }
    ensure!(logs[0] == logs[1], "episode logs differ between identical runs");
    ensure!(reports[0] == reports[1], "reports differ between identical runs");

    let loaded = load_bundles(&bundle_paths).map_err(|e| e.to_string())?;
    let m: RunManifest = serde_json::from_value(manifest).map_err(|e| e.to_string())?;
    let jobs = plan(&m, &loaded).map_err(|e| e.to_string())?;
    let state = AppState::new(loaded.iter().map(|l| l.bundle.clone()).collect());
    let app = router(Arc::new(state));
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for job in &jobs {
        let Runner::Policy(spec) = &job.runner else { continue };
        let bundle = &loaded[job.bundle_index].bundle;
        let table = bundle.experiment(&job.experiment).unwrap();
        let sample = sample_for(bundle, &job.experiment, job.budget, job.k, job.test_demos).map_err(|e| e.to_string())?;
        let demos: Vec<&ExperimentTable> = sample.demos.iter().map(|d| bundle.experiment(&d.experiment_id).unwrap()).collect();
        let mut policy = spec.build(table, &demos).map_err(|e| e.to_string())?;
        let mut mirror = init_episode(bundle, &job.experiment, job.budget).unwrap().with_matching(job.matching);
        let id = job.id();
        let body = rt.block_on(async {
            let create = json!({
                "task": bundle.task_id, "env": job.experiment, "budget": job.budget, "episode_id": id,
                "matching": job.matching, "reward_mode": job.reward_mode, "method": job.runner.method(), "seed": job.seed,
            });
            let (status, _) = http(&app, "POST", "/episodes", Some(create)).await;
            assert_eq!(status, StatusCode::CREATED);
            while !mirror.is_finished() {
                let config = policy.propose(&mirror, table).unwrap();
                let raw = render_proposal(&config, &table.space);
                let (status, _) = http(&app, "POST", &format!("/episodes/{id}/step"), Some(json!({ "config": raw }))).await;
                assert_eq!(status, StatusCode::OK);
                mirror.step(table, &raw).unwrap();
            }
            http(&app, "GET", &format!("/episodes/{id}/log"), None).await.1
        });
        let cli_log = &logs[0][&job.file_name()];
        ensure!(&body == cli_log, "HTTP log for {} ({}) differs from the CLI log", id, job.runner.method());
        compared += 1;
    }
    ensure!(compared > 0, "no policy jobs compared over HTTP");
    Ok(format!("{} logs identical across runs; {compared} match over HTTP", logs[0].len()))
}

// ---------------------------------------------------------------- driver

struct Criterion {
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "reward formula", limit: Duration::from_secs(10), check: reward_suite },
        Criterion { name: "group advantages", limit: Duration::from_secs(5), check: advantage_suite },
        Criterion { name: "LCS and matching", limit: Duration::from_secs(30), check: lcs_suite },
        Criterion { name: "reward densification", limit: Duration::from_secs(120), check: densification_suite },
        Criterion { name: "regret and oracle", limit: Duration::from_secs(30), check: regret_suite },
        Criterion { name: "baseline ordering", limit: Duration::from_secs(120), check: baseline_suite },
        Criterion { name: "shift certification", limit: Duration::from_secs(10), check: shift_suite },
        Criterion { name: "cost model", limit: Duration::from_secs(10), check: cost_suite },
        Criterion { name: "curation", limit: Duration::from_secs(30), check: curation_suite },
        Criterion { name: "end-to-end determinism", limit: Duration::from_secs(60), check: determinism_suite },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; over the time limit")),
            Err(e) => (false, e),
        };
        failed += !ok as usize;
        println!(
            "[{}] {:>2}. {:<24} {:>7.2}s / {:>3}s  {}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
