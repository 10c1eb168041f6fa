//! Private top-k style selections: Gumbel top-k, propose-test-release and
//! the limited-domain noisy max.

use serde::{Deserialize, Serialize};

use super::{argmax, check_epsilon, MechanismError, PrivacyBudget, ScoreVector, Sensitivity, VoteHistogram};
use crate::rng::RngStream;

/// Result of [`ptr_topk`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PtrOutcome {
    /// The exact top-k indices in rank order.
    Release(Vec<usize>),
    Abstain,
}

impl PtrOutcome {
    pub fn is_abstain(&self) -> bool {
        matches!(self, PtrOutcome::Abstain)
    }
}

/// Result of [`limited_domain_max`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitedDomainOutcome {
    Selected(usize),
    Bottom,
}

/// Top-k by adding Gumbel noise of scale `2Δq/ε` to each score.
///
/// Equivalent in distribution to k rounds of the exponential mechanism at ε
/// each, removing the winner after every round; the total cost is therefore
/// `k·ε` under basic composition.
pub fn gumbel_topk(
    scores: &ScoreVector,
    sensitivity: Sensitivity,
    epsilon: f64,
    k: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>, MechanismError> {
    check_epsilon(epsilon)?;
    if k == 0 || k > scores.len() {
        return Err(MechanismError::invalid(format!(
            "k must lie in 1..={}, got {k}",
            scores.len()
        )));
    }
    let scale = 2.0 * sensitivity.value() / epsilon;
    let noisy: Vec<f64> = scores.scores().iter().map(|s| s + scale * rng.gumbel()).collect();
    if k == 1 {
        return Ok(vec![argmax(&noisy)]);
    }
    let mut idx: Vec<usize> = (0..noisy.len()).collect();
    idx.sort_by(|&a, &b| noisy[b].total_cmp(&noisy[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// Propose-test-release for the exact top-k set.
///
/// With `d` the gap between the k-th and (k+1)-th largest counts, the exact
/// top-k is released iff `d + Lap(2/ε) - 2·ln(1/(2δ))/ε > 2`. The Laplace
/// scale covers a gap sensitivity of 2; the offset bounds the probability of
/// releasing on an unstable instance by δ. Otherwise the call abstains.
pub fn ptr_topk(
    hist: &VoteHistogram,
    k: usize,
    budget: PrivacyBudget,
    rng: &mut RngStream,
) -> Result<PtrOutcome, MechanismError> {
    if budget.delta() <= 0.0 {
        return Err(MechanismError::invalid("propose-test-release needs delta > 0"));
    }
    if k == 0 || k >= hist.len() {
        return Err(MechanismError::invalid(format!(
            "k must lie in 1..{}, got {k}",
            hist.len()
        )));
    }
    let eps = budget.epsilon();
    let ranking = hist.ranking();
    let counts = hist.counts();
    let gap = (counts[ranking[k - 1]] - counts[ranking[k]]) as f64;
    let offset = 2.0 * (1.0 / (2.0 * budget.delta())).ln() / eps;
    let noisy_gap = gap + rng.laplace(2.0 / eps) - offset;
    if noisy_gap > 2.0 {
        Ok(PtrOutcome::Release(ranking[..k].to_vec()))
    } else {
        Ok(PtrOutcome::Abstain)
    }
}

/// Noisy max restricted to the `kbar` largest counts, with a bottom outcome.
///
/// Each restricted count gets `Lap(2/ε)` noise; so does the threshold
/// `c_(kbar+1) + 1 + 2·ln(1/δ)/ε`, where `c_(kbar+1)` is the (kbar+1)-th largest
/// count (zero when the domain has only `kbar` candidates). The restricted
/// noisy argmax is returned only if it beats the noisy threshold.
pub fn limited_domain_max(
    hist: &VoteHistogram,
    kbar: usize,
    budget: PrivacyBudget,
    rng: &mut RngStream,
) -> Result<LimitedDomainOutcome, MechanismError> {
    if budget.delta() <= 0.0 {
        return Err(MechanismError::invalid("limited-domain max needs delta > 0"));
    }
    if kbar == 0 || kbar > hist.len() {
        return Err(MechanismError::invalid(format!(
            "kbar must lie in 1..={}, got {kbar}",
            hist.len()
        )));
    }
    let eps = budget.epsilon();
    let scale = 2.0 / eps;
    let ranking = hist.ranking();
    let counts = hist.counts();
    let next = ranking.get(kbar).map_or(0, |&i| counts[i]) as f64;
    let threshold = next + 1.0 + 2.0 * (1.0 / budget.delta()).ln() / eps + rng.laplace(scale);

    let restricted = &ranking[..kbar];
    let noisy: Vec<f64> = restricted.iter().map(|&i| counts[i] as f64 + rng.laplace(scale)).collect();
    // Restricted candidates are listed in rank order, so the positional
    // argmax would break noisy ties by rank. Break them by candidate index.
    let mut best = 0;
    for j in 1..noisy.len() {
        if noisy[j] > noisy[best] || (noisy[j] == noisy[best] && restricted[j] < restricted[best]) {
            best = j;
        }
    }
    if noisy[best] > threshold {
        Ok(LimitedDomainOutcome::Selected(restricted[best]))
    } else {
        Ok(LimitedDomainOutcome::Bottom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(e: f64, d: f64) -> PrivacyBudget {
        PrivacyBudget::new(e, d).unwrap()
    }

    #[test]
    fn gumbel_full_permutation() {
        let s = ScoreVector::from_scores(vec![0.3, 2.0, -1.0, 0.0]).unwrap();
        let mut rng = RngStream::from_seed(1);
        let mut out = gumbel_topk(&s, Sensitivity::UNIT, 1.0, 4, &mut rng).unwrap();
        out.sort();
        assert_eq!(out, vec![0, 1, 2, 3]);
    }

    #[test]
    fn gumbel_noiseless_limit() {
        let s = ScoreVector::from_scores(vec![9.0, 5.0, 1.0]).unwrap();
        let mut rng = RngStream::from_seed(2);
        let hits = (0..10_000)
            .filter(|_| gumbel_topk(&s, Sensitivity::UNIT, 1e6, 2, &mut rng).unwrap() == vec![0, 1])
            .count();
        assert!(hits as f64 / 10_000.0 >= 0.999);
    }

    #[test]
    fn gumbel_rejects_bad_k() {
        let s = ScoreVector::from_scores(vec![1.0, 0.0]).unwrap();
        let mut rng = RngStream::from_seed(3);
        assert!(gumbel_topk(&s, Sensitivity::UNIT, 1.0, 3, &mut rng).is_err());
        assert!(gumbel_topk(&s, Sensitivity::UNIT, 1.0, 0, &mut rng).is_err());
    }

    #[test]
    fn ptr_releases_clear_winner() {
        let h = VoteHistogram::from_counts(vec![100, 1, 1, 1]).unwrap();
        let mut rng = RngStream::from_seed(4);
        let hits = (0..10_000)
            .filter(|_| ptr_topk(&h, 1, budget(1.0, 1e-5), &mut rng).unwrap() == PtrOutcome::Release(vec![0]))
            .count();
        assert!(hits as f64 / 10_000.0 >= 0.99);
    }

    #[test]
    fn ptr_abstains_on_zero_gap() {
        let h = VoteHistogram::from_counts(vec![5, 5, 5]).unwrap();
        let mut rng = RngStream::from_seed(5);
        let abst = (0..10_000)
            .filter(|_| ptr_topk(&h, 1, budget(1.0, 1e-5), &mut rng).unwrap().is_abstain())
            .count();
        assert!(abst as f64 / 10_000.0 >= 0.99);
    }

    #[test]
    fn ptr_noiseless_limit() {
        let h = VoteHistogram::from_counts(vec![7, 0]).unwrap();
        let mut rng = RngStream::from_seed(6);
        for _ in 0..1000 {
            assert_eq!(ptr_topk(&h, 1, budget(1e12, 1e-5), &mut rng).unwrap(), PtrOutcome::Release(vec![0]));
        }
    }

    #[test]
    fn ptr_releases_in_rank_order() {
        let h = VoteHistogram::from_counts(vec![10, 80, 0, 90, 0]).unwrap();
        let mut rng = RngStream::from_seed(7);
        assert_eq!(ptr_topk(&h, 3, budget(1e12, 1e-5), &mut rng).unwrap(), PtrOutcome::Release(vec![3, 1, 0]));
    }

    #[test]
    fn ptr_errors() {
        let h = VoteHistogram::from_counts(vec![3, 1]).unwrap();
        let mut rng = RngStream::from_seed(8);
        assert!(ptr_topk(&h, 2, budget(1.0, 1e-5), &mut rng).is_err());
        assert!(ptr_topk(&h, 1, budget(1.0, 0.0), &mut rng).is_err());
    }

    #[test]
    fn lda_dominant() {
        let h = VoteHistogram::from_counts(vec![50, 0, 0, 0]).unwrap();
        let mut rng = RngStream::from_seed(9);
        let hits = (0..10_000)
            .filter(|_| limited_domain_max(&h, 1, budget(8.0, 1e-5), &mut rng).unwrap() == LimitedDomainOutcome::Selected(0))
            .count();
        assert!(hits as f64 / 10_000.0 >= 0.99);
    }

    #[test]
    fn lda_flat_counts_bottom() {
        let h = VoteHistogram::from_counts(vec![6, 6, 6, 6]).unwrap();
        let mut rng = RngStream::from_seed(10);
        let bottoms = (0..10_000)
            .filter(|_| limited_domain_max(&h, 1, budget(1.0, 1e-5), &mut rng).unwrap() == LimitedDomainOutcome::Bottom)
            .count();
        assert!(bottoms as f64 / 10_000.0 >= 0.9);
    }

    #[test]
    fn lda_single_candidate() {
        let h = VoteHistogram::from_counts(vec![10]).unwrap();
        let mut rng = RngStream::from_seed(11);
        let hits = (0..10_000)
            .filter(|_| limited_domain_max(&h, 1, budget(8.0, 1e-5), &mut rng).unwrap() == LimitedDomainOutcome::Selected(0))
            .count();
        assert!(hits as f64 / 10_000.0 >= 0.99);
    }

    #[test]
    fn lda_errors() {
        let h = VoteHistogram::from_counts(vec![3, 1]).unwrap();
        let mut rng = RngStream::from_seed(12);
        assert!(limited_domain_max(&h, 3, budget(1.0, 1e-5), &mut rng).is_err());
        assert!(limited_domain_max(&h, 1, budget(1.0, 0.0), &mut rng).is_err());
    }
}
