//! Token-by-token private generation from disjoint shot subsets.

use dp_workbench::aggregation::{fewshotgen_generate, GenerationBudget};
use dp_workbench::mechanisms::PrivacyBudget;
use dp_workbench::simharness::{SimTeacherModel, SimTokenEnsemble};
use dp_workbench::RngStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let target: Vec<usize> = vec![17, 4, 33, 8, 8, 21, 2, 49, 10, 0];
    for accuracy in [1.0, 0.8, 0.5] {
        let model = SimTeacherModel::uniform(accuracy, 50)?;
        let ensemble = SimTokenEnsemble::new(model, target.clone(), 20, RngStream::from_seed(5))?;
        for per_token in [0.5, 2.0, 8.0] {
            let budget = GenerationBudget::new(PrivacyBudget::pure(per_token * 10.0)?, per_token, 10)?;
            let out = fewshotgen_generate(&ensemble, &budget, None, &mut RngStream::from_seed(6))?;
            let hits = out.tokens.iter().zip(&target).filter(|(a, b)| a == b).count();
            println!(
                "accuracy {accuracy:.1}, epsilon/token {per_token:>3}: {hits}/10 tokens match, spent {}",
                out.spent.epsilon
            );
        }
    }
    // A stop token ends generation early and is charged like any other token.
    let model = SimTeacherModel::uniform(1.0, 50)?;
    let ensemble = SimTokenEnsemble::new(model, target.clone(), 20, RngStream::from_seed(5))?;
    let budget = GenerationBudget::even_split(PrivacyBudget::pure(40.0)?, 10)?;
    let out = fewshotgen_generate(&ensemble, &budget, Some(8), &mut RngStream::from_seed(7))?;
    println!("with stop token 8: {:?}, spent {}", out.tokens, out.spent.epsilon);
    Ok(())
}
