//! Runs episodes through the JSON-lines agent protocol: a scripted agent
//! with format noise, and an external process reading stdin.

use configym::curation::{sample_for, TestDemoTiers};
use configym::episode::EpisodeOptions;
use configym::protocol::{run_episode_with_agent, RunOptions, ScriptedAgent, ScriptedAgentSpec, SubprocessAgent};
use configym::synth::{gen_grpo_task, GrpoSpec};

fn main() {
    let bundle = gen_grpo_task(&GrpoSpec::default()).unwrap();
    let sample = sample_for(&bundle, "gsm8k-1536", 3, 3, TestDemoTiers::Medium).unwrap();
    let table = bundle.experiment("gsm8k-1536").unwrap();

    for matching in [false, true] {
        let mut agent = ScriptedAgent::new(&ScriptedAgentSpec::NoisyFormat { p: 0.5, seed: 4 }, table);
        let opts = RunOptions {
            episode_id: format!("noisy-{matching}"),
            episode: EpisodeOptions { matching, ..EpisodeOptions::default() },
            ..RunOptions::default()
        };
        let run = run_episode_with_agent(&mut agent, &sample, &bundle, &opts).unwrap();
        println!("matching {matching}: corruptions {:?}", &agent.corruptions()[..3]);
        for msg in run.transcript.iter().skip(1) {
            println!("  {}", msg.to_line());
        }
    }

    // Any program that reads the prompt and answers with exec_config lines
    // can act as the agent. This one always proposes the same config.
    let script = r#"while read -r line; do
  id=$(printf '%s' "$line" | sed -n 's/.*"episode_id":"\([^"]*\)".*/\1/p')
  case "$line" in *'"type":"episode_end"'*) exit 0;; esac
  printf '{"episode_id":"%s","type":"exec_config","payload":{"config":"<config>{'"'"'lr'"'"': 1e-06, '"'"'mb'"'"': 64, '"'"'kl'"'"': 0}</config>"}}\n' "$id"
done"#;
    match SubprocessAgent::spawn(script) {
        Ok(mut agent) => {
            let opts = RunOptions { episode_id: "shell".into(), ..RunOptions::default() };
            let single = sample_for(&bundle, "gsm8k-1536", 1, 3, TestDemoTiers::Medium).unwrap();
            let run = run_episode_with_agent(&mut agent, &single, &bundle, &opts).unwrap();
            println!("shell agent: reward {} after {} strikes", run.summary.reward, run.strikes);
        }
        Err(e) => println!("could not start shell agent: {e}"),
    }
}
