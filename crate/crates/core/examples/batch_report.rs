//! Runs a manifest of seeded jobs in parallel, then aggregates the episode
//! logs into a report.

use configym::report::{aggregate_report, Grouping};
use configym::runner::{execute, load_logs, RunManifest};
use configym::synth::{write_bundles, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    write_bundles(&[SynthSpec::default_for("grpo", 0).unwrap()], dir.path())?;
    let manifest: RunManifest = serde_json::from_value(serde_json::json!({
        "bundles": [dir.path().join("rl_grpo.json")],
        "policies": ["random", "topk_warmstart", "exhaustive"],
        "scripted_agent": {"kind": "noisy_format", "p": 0.32, "seed": 0},
        "budgets": [1, 2, 3, 4, 5],
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7],
        "out": dir.path().join("logs"),
    }))?;
    let summary = execute(&manifest, 4)?;
    println!("{} jobs run", summary.outcomes.len());
    let logs = load_logs(&manifest.out)?;
    let report = aggregate_report(&logs, Grouping::MethodBudget)?;
    print!("{}", report.to_tsv());
    Ok(())
}
