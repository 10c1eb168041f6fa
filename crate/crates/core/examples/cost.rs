//! Query and training costs for the shipped workloads and a few what-ifs.

use dp_workbench::costmodel::{method_cost_report, query_cost, MethodDescriptor, PricingTable, QueryWorkload, TokenProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pricing = PricingTable::builtin();
    for (name, text) in [
        ("samsum 0-shot davinci", include_str!("../data/workloads/samsum_zero_shot_davinci.json")),
        ("samsum dp-icl davinci", include_str!("../data/workloads/samsum_dpicl_davinci.json")),
        ("privatelora a40 5h", include_str!("../data/workloads/privatelora_a40_5h.json")),
        ("empty", include_str!("../data/workloads/empty.json")),
    ] {
        let method: MethodDescriptor = serde_json::from_str(text)?;
        println!("{name:<24} {}", method_cost_report(&pricing, &method)?.rounded());
    }

    let profiles = TokenProfile::builtin();
    println!("\n10k one-shot queries, ensemble of 10:");
    for (dataset, profile) in &profiles {
        let w = QueryWorkload {
            n_queries: 10_000,
            n_shots: 1,
            ensemble_size: 10,
            profile: *profile,
        };
        let line: Vec<String> = pricing
            .models
            .keys()
            .map(|m| Ok(format!("{m}: ${:.2}", query_cost(&pricing, m, &w)?)))
            .collect::<Result<_, dp_workbench::costmodel::CostError>>()?;
        println!("{dataset:<9} {}", line.join("  "));
    }
    Ok(())
}
