//! Queries a lookup table directly and shows how malformed proposals are
//! redirected to the most similar recorded configuration.

use configym::lookup::match_most_similar;
use configym::proposal::parse_strict;
use configym::synth::{gen_grpo_task, GrpoSpec};

fn main() {
    let bundle = gen_grpo_task(&GrpoSpec::default()).unwrap();
    let table = bundle.experiment("gsm8k-768").unwrap();

    let config = parse_strict("{'lr': 5e-06, 'mb': 32, 'kl': 0.001}", &table.space).unwrap();
    let outcome = table.query(&config).unwrap();
    println!("exact query: score {:.4}", outcome.score);

    for raw in [
        "{'lr': 5e-06, 'mb': 32, 'kl': 0.001}",
        "{'lr': 5e-06, 'mb': 32, 'kl': 0.001)",
        "{'lr': 5e-06, 'mb': 32, 'kl': 0.001, 'lr': 5e-06}",
        "{'lr': 5e-06, 'mb': 3",
        "learning rate five e minus six please",
    ] {
        let m = match_most_similar(table, raw);
        println!(
            "{raw:<52} -> {:<28} matched={} parse={:?} score {:.4}",
            m.record.key, m.matched, m.parse, m.record.outcome.score
        );
    }
}
