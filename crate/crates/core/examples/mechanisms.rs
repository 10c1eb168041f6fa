//! Samples each selection mechanism on one vote histogram and prints the
//! empirical output frequencies.

use dp_workbench::mechanisms::{
    exponential_mechanism, gnmax, gumbel_topk, limited_domain_max, ptr_topk, report_noisy_max, LimitedDomainOutcome,
    NoisyMaxNoise, PrivacyBudget, PtrOutcome, ScoreVector, Sensitivity, VoteHistogram,
};
use dp_workbench::RngStream;

const N: usize = 20_000;

fn freq(name: &str, picks: impl Iterator<Item = usize>, size: usize) {
    let mut c = vec![0usize; size];
    for p in picks {
        c[p] += 1;
    }
    let f: Vec<String> = c.iter().map(|x| format!("{:.3}", *x as f64 / N as f64)).collect();
    println!("{name:<14} {}", f.join("  "));
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hist = VoteHistogram::from_counts(vec![12, 9, 3, 1])?;
    let scores = ScoreVector::from(&hist);
    let eps = 1.0;
    let mut rng = RngStream::from_seed(2024);
    println!("counts         {:?}, epsilon {eps}", hist.counts());

    let em: Vec<usize> = (0..N)
        .map(|_| exponential_mechanism(&scores, Sensitivity::UNIT, eps, &mut rng))
        .collect::<Result<_, _>>()?;
    freq("exponential", em.into_iter(), hist.len());

    let noise = NoisyMaxNoise::laplace_for_epsilon(eps)?;
    let rnm: Vec<usize> = (0..N).map(|_| report_noisy_max(&hist, noise, &mut rng)).collect::<Result<_, _>>()?;
    freq("rnm-laplace", rnm.into_iter(), hist.len());

    let gn: Vec<usize> = (0..N).map(|_| gnmax(&hist, 3.0, &mut rng)).collect::<Result<_, _>>()?;
    freq("gnmax s=3", gn.into_iter(), hist.len());

    let gb: Vec<usize> = (0..N)
        .map(|_| gumbel_topk(&scores, Sensitivity::UNIT, eps, 1, &mut rng).map(|v| v[0]))
        .collect::<Result<_, _>>()?;
    freq("gumbel top-1", gb.into_iter(), hist.len());

    let top2 = gumbel_topk(&scores, Sensitivity::UNIT, eps, 2, &mut rng)?;
    println!("gumbel top-2   {top2:?}");

    let budget = PrivacyBudget::new(eps, 1e-5)?;
    let strong = VoteHistogram::from_counts(vec![40, 38, 2, 0])?;
    let released = (0..N)
        .filter(|_| matches!(ptr_topk(&strong, 2, budget, &mut rng), Ok(PtrOutcome::Release(_))))
        .count();
    println!("ptr top-2      released {:.3} of calls on {:?}", released as f64 / N as f64, strong.counts());

    let bottoms = (0..N)
        .filter(|_| matches!(limited_domain_max(&hist, 2, budget, &mut rng), Ok(LimitedDomainOutcome::Bottom)))
        .count();
    println!("limited domain bottom {:.3} of calls", bottoms as f64 / N as f64);
    Ok(())
}
