//! Keyword-space aggregation: private keyword sets from free-text teachers,
//! and a PromptPATEGen student built from them.

use dp_workbench::aggregation::{
    ksa_select, promptpategen_build_student, KeywordExtraction, KsaMethod, PromptPateGenConfig, TextEnsemble,
};
use dp_workbench::mechanisms::PrivacyBudget;
use dp_workbench::simharness::RecordedEnsemble;
use dp_workbench::RngStream;

const TRANSCRIPT: &str = r#"{
  "texts": [
    ["the film was warm and funny", "funny warm story", "a warm funny film", "funny and warm", "warm funny cast", "funny, warm, slow"],
    ["boring plot and slow pace", "slow boring", "a slow film", "boring slow dull", "slow and boring", "dull slow boring"],
    ["mixed", "nothing", "unclear", "hard to say", "meh", "okay"]
  ]
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ensemble = RecordedEnsemble::from_json(TRANSCRIPT)?;
    let extraction = KeywordExtraction::whitespace(6)?;
    // With six teachers the largest possible gap is 6, so PTR needs a
    // generous budget before it can clear its offset.
    let budget = PrivacyBudget::new(8.0, 1e-3)?;
    let mut rng = RngStream::from_seed(11);

    for q in 0..ensemble.n_text_queries() {
        let texts: Vec<String> = (0..TextEnsemble::<usize>::n_teachers(&ensemble)).map(|t| ensemble.respond(&q, t)).collect();
        for method in [KsaMethod::Ptr, KsaMethod::GumbelTopk] {
            let sel = ksa_select(&texts, &extraction, 2, budget, method, &mut rng)?;
            println!("query {q} {method:?}: {:?}", sel.outcome);
        }
    }

    let inputs: Vec<usize> = (0..ensemble.n_text_queries()).collect();
    let config = PromptPateGenConfig {
        k: 2,
        per_query_budget: budget,
        n_shots: 2,
        method: KsaMethod::Ptr,
    };
    let student = promptpategen_build_student(&ensemble, &inputs, &extraction, config, &mut rng)?;
    for shot in &student.shots {
        println!("shot: input {} -> {:?}", shot.input, shot.output);
    }
    let spent = student.spent();
    println!("spent epsilon {} delta {:e} over {} charged queries", spent.epsilon, spent.delta, student.ledger.len());
    Ok(())
}
