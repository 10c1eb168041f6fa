//! Exact output distributions and an exhaustive privacy-loss audit on a
//! small histogram.

use dp_workbench::mechanisms::VoteHistogram;
use dp_workbench::simharness::{dp_ratio_audit, exact_mechanism_distribution, MechanismSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hist = VoteHistogram::from_counts(vec![6, 4, 4, 0, 1])?;
    let eps = 1.0;
    let specs = [
        MechanismSpec::Exponential { sensitivity: 1.0, epsilon: eps },
        MechanismSpec::GumbelTop1 { sensitivity: 1.0, epsilon: eps },
        MechanismSpec::rnm_laplace_for_epsilon(eps),
        MechanismSpec::Gnmax { sigma: 2.0 },
    ];
    for spec in &specs {
        let p = exact_mechanism_distribution(spec, &hist.as_f64())?;
        let shown: Vec<String> = p.iter().map(|x| format!("{x:.4}")).collect();
        println!("{spec:?}\n  {}", shown.join(" "));
    }
    for spec in &specs[..3] {
        let r = dp_ratio_audit(spec, &hist, eps)?;
        println!("audit {spec:?}: max log ratio {:.6} (neighbour +1 at {}, outcome {}) pass={}", r.max_log_ratio, r.worst_neighbor, r.worst_outcome, r.passed);
    }
    Ok(())
}
