//! Steps an episode by hand, then scores a group of rollouts with the
//! cumulative regret reward and group-normalized advantages.

use configym::episode::{group_advantages, AdvantageParams, EpisodeOptions, RewardMode, Session};
use configym::synth::{gen_grpo_task, GrpoSpec};

fn main() {
    let bundle = gen_grpo_task(&GrpoSpec::default()).unwrap();
    let table = bundle.experiment("dapo-768").unwrap();

    let mut session = Session::start(&bundle, "dapo-768", 3, "demo", EpisodeOptions::default()).unwrap();
    for raw in [
        "{'lr': 1e-06, 'mb': 64, 'kl': 0}",
        "{'lr': 1e-06, 'mb': 32, 'kl': 0)",
        "{'lr': 5e-06, 'mb': 64, 'kl': 0}",
    ] {
        let obs = session.step(table, raw).unwrap();
        println!("{raw:<36} -> {:?} {:?} score {:?}", obs.status, obs.canonical, obs.score);
    }
    let summary = session.finish();
    println!("strict reward {:.4}, regret {:.4}", summary.reward, summary.regret);
    print!("{}", session.log().to_jsonl());

    // A group of rollouts, scored in both modes.
    let rollouts = [
        vec!["{'lr': 1e-06, 'mb': 64, 'kl': 0}", "{'lr': 1e-06, 'mb': 32, 'kl': 0}"],
        vec!["{'lr': 1e-05, 'mb': 16, 'kl': 0.001}", "{'lr': 1e-05, 'mb': 32, 'kl': 0.001}"],
        vec!["{'lr': 1e-06, 'mb': 64, 'kl': 0}", "{'lr': 1e-06, 'mb': 64, 'kl': 0}"],
        vec!["{'lr': 1e-06, 'mb': 64, 'kl': 0]", "{'lr': 5e-06, 'mb': 64, 'kl': 0}"],
    ];
    for mode in [RewardMode::Strict, RewardMode::Lenient] {
        let rewards: Vec<f64> = rollouts
            .iter()
            .enumerate()
            .map(|(i, props)| {
                let opts = EpisodeOptions { reward_mode: mode, ..EpisodeOptions::default() };
                let mut s = Session::start(&bundle, "dapo-768", props.len(), format!("g{i}"), opts).unwrap();
                for p in props {
                    s.step(table, p).unwrap();
                }
                s.finish().reward
            })
            .collect();
        let adv = group_advantages(&rewards, AdvantageParams::default());
        println!("{mode:?}: rewards {rewards:.3?} advantages {adv:.3?}");
    }
}
