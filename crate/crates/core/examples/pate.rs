//! PromptPATE: simulated teachers label public inputs with GNMax and the
//! student keeps the shots a public scorer likes best.

use dp_workbench::aggregation::{pate_label, promptpate_build_student, Shot};
use dp_workbench::simharness::{SimClassEnsemble, SimQuery, SimTeacherModel};
use dp_workbench::RngStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SimTeacherModel::uniform(0.85, 4)?;
    let ensemble = SimClassEnsemble::new(model, 50, RngStream::from_seed(1))?;
    let mut truth_rng = RngStream::from_seed(2);
    let public: Vec<SimQuery> = (0..30).map(|i| SimQuery { index: i, truth: truth_rng.below(4) }).collect();
    let sigma = 6.0;

    let mut rng = RngStream::from_seed(3);
    let one = pate_label(&ensemble, &public[0], sigma, &mut rng)?;
    println!("query 0: votes {:?} -> label {} (truth {})", one.histogram.counts(), one.label, public[0].truth);

    // Prefer label-balanced prompts; the scorer only sees public data.
    let balance = |shots: &[Shot<SimQuery, usize>]| {
        let mut c = [0.0f64; 4];
        for s in shots {
            c[s.output] += 1.0;
        }
        -c.iter().map(|x| x * x).sum::<f64>()
    };
    let student = promptpate_build_student(&ensemble, &public, sigma, 4, balance, &mut rng)?;
    for (shot, src) in student.shots.iter().zip(&student.provenance) {
        println!("shot from public input {src:>2}: label {} (truth {})", shot.output, shot.input.truth);
    }
    let correct = public
        .iter()
        .enumerate()
        .filter(|(i, q)| pate_label(&ensemble, *q, sigma, &mut rng.derive(100 + *i as u64)).map(|l| l.label) == Ok(q.truth))
        .count();
    println!("label accuracy over all public inputs: {correct}/{}", public.len());
    let total = student.ledger.rdp_total()?.expect("labels were charged");
    let eps = dp_workbench::accounting::to_eps_delta(&total, 1e-5)?;
    println!("{} GNMax charges compose to epsilon {:.3} at delta 1e-5 (order {})", student.ledger.len(), eps.epsilon, eps.alpha);
    Ok(())
}
