//! Evaluates the training-cost amortization model: break-even point,
//! critical task count and cumulative cost curves.

use configym::cost::{cost_report, cumulative_cost_curves, CostModelParams, CostScenario};

fn main() {
    let worked = CostModelParams { k: 5, m: 4, e_m: 100.0, s_base: 3.0, s_meta: 1.0, t_hf: 50.0, t_lf: 1.0 };
    println!("{}", serde_json::to_string_pretty(&cost_report(&worked).unwrap()).unwrap());

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/cost_calibration.json");
    let scenario: CostScenario = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let report = cost_report(&scenario.params).unwrap();
    println!(
        "{} (synthetic: {}): baseline {} vs trained {} -> {:.1}x cheaper at K={}",
        scenario.name,
        scenario.synthetic,
        report.c_base,
        report.c_meta,
        report.c_base / report.c_meta,
        scenario.params.k
    );
    let curves = cumulative_cost_curves(&scenario.params, &scenario.ks()).unwrap();
    print!("{}", curves.to_tsv().lines().take(8).collect::<Vec<_>>().join("\n"));
    println!("\n... crossing at K = {:?}", curves.crossing);
}
