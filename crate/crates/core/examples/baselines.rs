//! Compares the built-in policies by mean regret per budget, on a control
//! task without landscape shift and on the shifted one.

use configym::baselines::{drive, ExhaustivePolicy, GreedyLocal, Policy, RandomPolicy, TopKWarmStart};
use configym::curation::{order_by_fidelity, sample_for, TestDemoTiers};
use configym::episode::{EpisodeOptions, Session};
use configym::lookup::{ExperimentTable, TaskBundle};
use configym::synth::{gen_pretrain_task, PretrainSpec};

type MakePolicy = dyn Fn(&ExperimentTable, &[&ExperimentTable], u64) -> Box<dyn Policy>;

fn mean_regret(bundle: &TaskBundle, budget: usize, make: &MakePolicy) -> f64 {
    let split = order_by_fidelity(bundle).unwrap();
    let mut total = 0.0;
    let seeds = 100;
    for seed in 0..seeds {
        let target = &split.high[seed as usize % split.high.len()];
        let table = bundle.experiment(target).unwrap();
        let sample = sample_for(bundle, target, budget, 5, TestDemoTiers::Medium).unwrap();
        let demos: Vec<&ExperimentTable> = sample.demos.iter().map(|d| bundle.experiment(&d.experiment_id).unwrap()).collect();
        let mut policy = make(table, &demos, seed);
        let mut s = Session::start(bundle, target, budget, "b", EpisodeOptions::default()).unwrap();
        total += drive(policy.as_mut(), &mut s, table).unwrap().regret;
    }
    total / seeds as f64
}

fn main() {
    let policies: [(&str, Box<MakePolicy>); 4] = [
        ("random", Box::new(|_, _, s| Box::new(RandomPolicy::new(s)))),
        ("topk_warmstart", Box::new(|t, d, s| Box::new(TopKWarmStart::new(t, d, 5, s)))),
        ("greedy_local", Box::new(|_, _, s| Box::new(GreedyLocal::new(1, s)))),
        ("exhaustive", Box::new(|_, _, _| Box::new(ExhaustivePolicy))),
    ];
    for (label, spec) in [("no shift", PretrainSpec::no_shift(0)), ("shifted", PretrainSpec::default())] {
        let bundle = gen_pretrain_task(&spec).unwrap();
        println!("{label}");
        for (name, make) in &policies {
            let row: Vec<String> = [1, 3, 5, 10].iter().map(|&b| format!("T={b}: {:.3}", mean_regret(&bundle, b, make.as_ref()))).collect();
            println!("  {name:<15} {}", row.join("  "));
        }
    }
}
