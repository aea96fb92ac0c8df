//! Generates the four synthetic task bundles and shows how their fidelity
//! tiers differ.
//!
//! cargo run --example generate_bundles -- [out_dir]

use configym::curation::order_by_fidelity;
use configym::synth::{write_bundles, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("configym-bundles"));
    let specs: Vec<SynthSpec> = ["pretrain", "architecture", "grpo", "mixture"]
        .iter()
        .map(|t| SynthSpec::default_for(t, 0).expect("known task"))
        .collect();
    let manifest = write_bundles(&specs, &out)?;
    for (entry, spec) in manifest.bundles.iter().zip(&specs) {
        let bundle = spec.generate()?;
        let split = order_by_fidelity(&bundle)?;
        println!("{} ({}) sha256 {}", entry.file, bundle.task_id, &entry.sha256[..16]);
        for (tier, ids) in [("low", &split.low), ("medium", &split.medium), ("high", &split.high)] {
            for id in ids {
                let t = bundle.experiment(id).unwrap();
                println!("  {tier:<6} {id:<28} {:>4} records, best {}", t.len(), t.argmax_keys()[0]);
            }
        }
    }
    println!("written to {}", out.display());
    Ok(())
}
