//! RDP accounting: calibrate a DP-SGD noise multiplier, convert it back, and
//! compose heterogeneous charges in a ledger.

use dp_workbench::accounting::{
    calibrate_sigma, default_orders, dpsgd_epsilon, rdp_gaussian, LedgerEntry, PrivacyLedger, SubsampledGaussianParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 50_000u64;
    println!("{:>6} {:>6} {:>6} {:>9} {:>9} {:>6}", "target", "q", "steps", "sigma", "epsilon", "alpha");
    for (q, steps) in [(0.01, 1000), (0.1, 100), (1.0, 1)] {
        for target in [0.3, 1.0, 3.0, 8.0] {
            match calibrate_sigma(target, 1.0 / n as f64, q, steps) {
                Ok(c) => {
                    let back = dpsgd_epsilon(SubsampledGaussianParams::new(c.sigma, q, steps)?, c.delta)?;
                    println!("{target:>6} {q:>6} {steps:>6} {:>9.4} {:>9.4} {:>6}", c.sigma, back.epsilon, back.alpha);
                }
                Err(e) => println!("{target:>6} {q:>6} {steps:>6} {e}"),
            }
        }
    }

    let mut ledger = PrivacyLedger::new();
    for i in 0..20 {
        ledger.push(LedgerEntry::rdp("gnmax", rdp_gaussian(40.0, &default_orders())?).with_meta("query", i));
    }
    ledger.push(LedgerEntry::approximate("ksa_ptr", 0.5, 1e-6));
    let basic = ledger.basic_total();
    let rdp = dp_workbench::accounting::to_eps_delta(&ledger.rdp_total()?.expect("rdp charges"), 1e-5)?;
    println!("pure/approximate charges: epsilon {} delta {:e}", basic.epsilon, basic.delta);
    println!("20 GNMax answers at sigma 40: epsilon {:.4} at delta 1e-5", rdp.epsilon);
    Ok(())
}
