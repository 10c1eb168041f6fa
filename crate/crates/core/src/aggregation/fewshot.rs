//! Token-by-token private generation: each disjoint private subset proposes
//! a next token, and one token is released from the vote histogram.

use serde::{Deserialize, Serialize};

use crate::accounting::{LedgerEntry, PrivacyLedger, SpentBudget};
use crate::mechanisms::{gumbel_topk, PrivacyBudget, ScoreVector, Sensitivity};
use crate::rng::RngStream;

use super::{AggregationError, TokenEnsemble};

/// Total budget, per-token ε and token cap for one generation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationBudget {
    total: PrivacyBudget,
    per_token_epsilon: f64,
    t_max: usize,
}

impl GenerationBudget {
    /// Requires `per_token_epsilon · t_max ≤ total.epsilon`.
    pub fn new(total: PrivacyBudget, per_token_epsilon: f64, t_max: usize) -> Result<Self, AggregationError> {
        if !(per_token_epsilon > 0.0 && per_token_epsilon.is_finite()) {
            return Err(AggregationError::InvalidInput(format!(
                "per-token epsilon must be positive, got {per_token_epsilon}"
            )));
        }
        let needed = per_token_epsilon * t_max as f64;
        if needed > total.epsilon() * (1.0 + 1e-12) {
            return Err(AggregationError::InvalidInput(format!(
                "{t_max} tokens at epsilon {per_token_epsilon} need {needed}, above the total {}",
                total.epsilon()
            )));
        }
        Ok(Self {
            total,
            per_token_epsilon,
            t_max,
        })
    }

    /// Splits `total` evenly across `t_max` tokens.
    pub fn even_split(total: PrivacyBudget, t_max: usize) -> Result<Self, AggregationError> {
        let per = if t_max == 0 { total.epsilon() } else { total.epsilon() / t_max as f64 };
        Self::new(total, per, t_max)
    }

    pub fn total(&self) -> PrivacyBudget {
        self.total
    }

    pub fn per_token_epsilon(&self) -> f64 {
        self.per_token_epsilon
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }
}

/// Releases one token from the subsets' proposals.
///
/// The candidate domain is the set of proposed tokens (ascending token id),
/// scored by vote count and selected with Gumbel top-1 at `epsilon_token`
/// and unit sensitivity.
pub fn fewshotgen_next_token(
    per_subset_candidates: &[usize],
    epsilon_token: f64,
    rng: &mut RngStream,
) -> Result<usize, AggregationError> {
    if per_subset_candidates.is_empty() {
        return Err(AggregationError::InvalidInput("no subset proposals".into()));
    }
    let mut support = per_subset_candidates.to_vec();
    support.sort_unstable();
    support.dedup();
    let mut counts = vec![0.0; support.len()];
    for c in per_subset_candidates {
        let i = support.binary_search(c).expect("token is in its own support");
        counts[i] += 1.0;
    }
    let scores = ScoreVector::from_scores(counts)?;
    let pick = gumbel_topk(&scores, Sensitivity::UNIT, epsilon_token, 1, rng)?;
    Ok(support[pick[0]])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    /// Released tokens, including the stop token when one was selected.
    pub tokens: Vec<usize>,
    pub spent: SpentBudget,
    pub ledger: PrivacyLedger,
}

/// Generates up to `t_max` tokens, feeding every selected token back to all
/// subsets. Stops early after releasing `stop_token`. Each released token
/// (step `t` uses `rng.derive(t)`) is charged `per_token_epsilon`.
pub fn fewshotgen_generate<E: TokenEnsemble + ?Sized>(
    ensemble: &E,
    budget: &GenerationBudget,
    stop_token: Option<usize>,
    rng: &mut RngStream,
) -> Result<GenerationOutput, AggregationError> {
    let mut tokens = Vec::with_capacity(budget.t_max);
    let mut ledger = PrivacyLedger::new();
    let mut proposals = Vec::with_capacity(ensemble.n_subsets());
    for step in 0..budget.t_max {
        proposals.clear();
        for s in 0..ensemble.n_subsets() {
            let tok = ensemble
                .propose(s, &tokens)
                .map_err(|message| AggregationError::Teacher { teacher: s, message })?;
            proposals.push(tok);
        }
        let mut step_rng = rng.derive(step as u64);
        let tok = fewshotgen_next_token(&proposals, budget.per_token_epsilon, &mut step_rng)?;
        tokens.push(tok);
        ledger.push(LedgerEntry::approximate("fewshotgen_token", budget.per_token_epsilon, 0.0).with_meta("step", step));
        if Some(tok) == stop_token {
            break;
        }
    }
    Ok(GenerationOutput {
        spent: SpentBudget {
            epsilon: tokens.len() as f64 * budget.per_token_epsilon,
            delta: 0.0,
        },
        tokens,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    #[test]
    fn budget_enforced() {
        let total = PrivacyBudget::pure(8.0).unwrap();
        assert!(GenerationBudget::new(total, 1.0, 8).is_ok());
        assert!(GenerationBudget::new(total, 1.0, 9).is_err());
        assert!(GenerationBudget::new(total, 0.0, 1).is_err());
        assert_eq!(GenerationBudget::even_split(total, 16).unwrap().per_token_epsilon(), 0.5);
    }

    #[test]
    fn unanimous_proposal() {
        let mut rng = RngStream::from_seed(1);
        for _ in 0..1000 {
            assert_eq!(fewshotgen_next_token(&[17; 20], 1.0, &mut rng).unwrap(), 17);
        }
    }

    #[test]
    fn split_proposals_are_fair() {
        let mut rng = RngStream::from_seed(2);
        let n = 100_000;
        let a = (0..n).filter(|_| fewshotgen_next_token(&[4, 9], 0.5, &mut rng).unwrap() == 4).count();
        assert!((a as f64 / n as f64 - 0.5).abs() <= 0.02);
    }

    #[test]
    fn single_subset() {
        let mut rng = RngStream::from_seed(3);
        assert_eq!(fewshotgen_next_token(&[42], 8.0, &mut rng).unwrap(), 42);
        assert!(fewshotgen_next_token(&[], 8.0, &mut rng).is_err());
    }

    struct Recorder {
        script: Vec<usize>,
        seen: Mutex<Vec<(usize, Vec<usize>)>>,
    }

    impl TokenEnsemble for Recorder {
        fn n_subsets(&self) -> usize {
            3
        }
        fn propose(&self, subset: usize, prefix: &[usize]) -> Result<usize, String> {
            self.seen.lock().unwrap().push((subset, prefix.to_vec()));
            Ok(self.script[prefix.len() % self.script.len()])
        }
    }

    #[test]
    fn zero_tokens() {
        let r = Recorder {
            script: vec![1],
            seen: Mutex::new(vec![]),
        };
        let b = GenerationBudget::new(PrivacyBudget::pure(1.0).unwrap(), 1.0, 0).unwrap();
        let out = fewshotgen_generate(&r, &b, None, &mut RngStream::from_seed(4)).unwrap();
        assert!(out.tokens.is_empty());
        assert_eq!(out.spent, SpentBudget::ZERO);
    }

    #[test]
    fn feedback_and_stop() {
        let r = Recorder {
            script: vec![5, 6, 7, 0, 9],
            seen: Mutex::new(vec![]),
        };
        let b = GenerationBudget::new(PrivacyBudget::pure(10.0).unwrap(), 2.0, 5).unwrap();
        let out = fewshotgen_generate(&r, &b, Some(0), &mut RngStream::from_seed(5)).unwrap();
        assert_eq!(out.tokens, vec![5, 6, 7, 0]);
        assert_eq!(out.spent.epsilon, 8.0);
        assert_eq!(out.ledger.basic_total().epsilon, 8.0);
        let seen = r.seen.lock().unwrap();
        for step in seen.chunks(3) {
            assert!(step.iter().all(|(_, p)| *p == step[0].1));
        }
    }

    struct Failing;
    impl TokenEnsemble for Failing {
        fn n_subsets(&self) -> usize {
            2
        }
        fn propose(&self, subset: usize, _prefix: &[usize]) -> Result<usize, String> {
            if subset == 1 {
                Err("rate limited".into())
            } else {
                Ok(0)
            }
        }
    }

    #[test]
    fn callback_failure_names_teacher() {
        let b = GenerationBudget::new(PrivacyBudget::pure(1.0).unwrap(), 1.0, 1).unwrap();
        let err = fewshotgen_generate(&Failing, &b, None, &mut RngStream::from_seed(6)).unwrap_err();
        assert_eq!(
            err,
            AggregationError::Teacher {
                teacher: 1,
                message: "rate limited".into()
            }
        );
    }
}
