//! Builds cross-fidelity training and test samples, renders one prompt and
//! prepares a truncated trajectory for continuation.

use configym::baselines::{drive, RandomPolicy};
use configym::curation::{
    accept_trajectory, build_samples, order_by_fidelity, render_context, truncate_for_continuation, RenderOptions,
    Role, TestDemoTiers,
};
use configym::episode::{EpisodeOptions, Session};
use configym::synth::{gen_grpo_task, GrpoSpec};

fn main() {
    let bundle = gen_grpo_task(&GrpoSpec::default()).unwrap();
    let split = order_by_fidelity(&bundle).unwrap();
    let samples = build_samples(&bundle, &split, 3, &[1, 2, 3, 4, 5], TestDemoTiers::Medium).unwrap();
    let train = samples.iter().filter(|s| s.role == Role::Train).count();
    println!("{train} train samples, {} test samples\n", samples.len() - train);

    let test = samples.iter().find(|s| s.role == Role::Test && s.budget == 3).unwrap();
    println!("{}", render_context(test, &bundle, RenderOptions::default()));

    let table = bundle.experiment(&test.target).unwrap();
    for seed in 0..20 {
        let mut s = Session::start(&bundle, &test.target, 5, "t", EpisodeOptions::default()).unwrap();
        drive(&mut RandomPolicy::new(seed), &mut s, table).unwrap();
        let traj = s.trajectory();
        if accept_trajectory(&traj, table) {
            let req = truncate_for_continuation(&traj, table, seed).unwrap();
            println!("seed {seed}: accepted; removed turn {}", req.removed_turn);
            println!("{}", serde_json::to_string_pretty(&req).unwrap());
            break;
        }
        println!("seed {seed}: rejected (never reached the optimum)");
    }
}
