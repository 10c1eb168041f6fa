//! Privacy-utility curves for simulated teacher ensembles, written as CSV.
//! Optional argument: a scenario JSON file.

use dp_workbench::simharness::{
    classification_limit_point, majority_vote_accuracy, paired_monotonicity, simulate, ScenarioConfig,
};
use dp_workbench::RngStream;

const DEFAULT: &str = include_str!("../data/scenarios/classification_gnmax.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(p) => std::fs::read_to_string(p)?,
        None => DEFAULT.to_string(),
    };
    let scenario = ScenarioConfig::from_json(&text)?;
    let root = RngStream::from_seed(7);
    let curve = simulate(&scenario, &root)?;
    print!("{}", curve.to_csv_string()?);
    for step in paired_monotonicity(&curve, 2.0) {
        println!(
            "# {} -> {}: diff {:+.4} (se {:.4}) {}",
            step.from_epsilon,
            step.to_epsilon,
            step.mean_diff,
            step.std_error,
            if step.ok { "ok" } else { "DECREASE" }
        );
    }
    if !scenario.mechanism.is_generation() {
        let limit = classification_limit_point(&scenario, &root)?;
        println!("# noiseless plurality {:.4}", limit.utility_mean);
        if scenario.teacher.domain_size <= 6 {
            println!("# exact plurality     {:.4}", majority_vote_accuracy(&scenario.teacher, scenario.n_teachers)?);
        }
    }
    Ok(())
}
