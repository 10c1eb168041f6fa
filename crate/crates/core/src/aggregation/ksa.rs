//! Keyword-space aggregation: a clamped presence histogram of keywords
//! across teacher outputs, released through a private top-k.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::accounting::LedgerEntry;
use crate::mechanisms::{gumbel_topk, ptr_topk, CandidateDomain, PrivacyBudget, PtrOutcome, ScoreVector, Sensitivity, VoteHistogram};
use crate::rng::RngStream;

use super::AggregationError;

type Tokenizer = dyn Fn(&str) -> Vec<String> + Send + Sync;

/// Splits text into keywords and caps each teacher's contribution.
#[derive(Clone)]
pub struct KeywordExtraction {
    tokenizer: Arc<Tokenizer>,
    max_keywords_per_teacher: usize,
}

impl fmt::Debug for KeywordExtraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeywordExtraction")
            .field("max_keywords_per_teacher", &self.max_keywords_per_teacher)
            .finish_non_exhaustive()
    }
}

/// Lowercased alphanumeric runs.
pub fn whitespace_keywords(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl KeywordExtraction {
    pub fn new<F>(tokenizer: F, max_keywords_per_teacher: usize) -> Result<Self, AggregationError>
    where
        F: Fn(&str) -> Vec<String> + Send + Sync + 'static,
    {
        if max_keywords_per_teacher == 0 {
            return Err(AggregationError::InvalidInput("max_keywords_per_teacher must be at least 1".into()));
        }
        Ok(Self {
            tokenizer: Arc::new(tokenizer),
            max_keywords_per_teacher,
        })
    }

    /// [`whitespace_keywords`] with the given clamp.
    pub fn whitespace(max_keywords_per_teacher: usize) -> Result<Self, AggregationError> {
        Self::new(whitespace_keywords, max_keywords_per_teacher)
    }

    pub fn max_keywords_per_teacher(&self) -> usize {
        self.max_keywords_per_teacher
    }

    /// The distinct keywords one teacher contributes, in first-occurrence
    /// order, truncated to the clamp.
    pub fn extract(&self, text: &str) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for w in (self.tokenizer)(text) {
            if out.len() == self.max_keywords_per_teacher {
                break;
            }
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
        out
    }
}

/// Presence counts over the keywords seen, in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct KeywordHistogram {
    pub keywords: Vec<String>,
    pub histogram: VoteHistogram,
}

/// Builds the clamped presence histogram: every teacher adds at most one to
/// each of at most `max_keywords_per_teacher` keywords.
pub fn keyword_histogram<S: AsRef<str>>(
    teacher_texts: &[S],
    extraction: &KeywordExtraction,
) -> Result<KeywordHistogram, AggregationError> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for text in teacher_texts {
        for w in extraction.extract(text.as_ref()) {
            *counts.entry(w).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(AggregationError::EmptyHistogram);
    }
    let (keywords, counts): (Vec<String>, Vec<u64>) = counts.into_iter().unzip();
    let domain = CandidateDomain::with_labels(keywords.iter().cloned())?;
    Ok(KeywordHistogram {
        keywords,
        histogram: VoteHistogram::new(domain, counts)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsaMethod {
    /// Propose-test-release on the top-k gap.
    Ptr,
    /// Gumbel top-k at ε/k per selected keyword.
    GumbelTopk,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KsaOutcome {
    /// Keywords in rank order.
    Keywords(Vec<String>),
    Abstain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KsaSelection {
    pub outcome: KsaOutcome,
    pub charge: LedgerEntry,
}

/// Privately selects `k` keywords from teacher outputs.
///
/// The whole `budget` is charged to the selection. With [`KsaMethod::Ptr`],
/// keywords no teacher produced count as zero, so a histogram with at most
/// `k` distinct keywords is padded with zero-count slots before the gap test;
/// padding never appears in the output. With [`KsaMethod::GumbelTopk`], each
/// of the `min(k, #keywords)` peels runs at `ε/k` with unit score
/// sensitivity (presence counts move by at most one per teacher).
pub fn ksa_select<S: AsRef<str>>(
    teacher_texts: &[S],
    extraction: &KeywordExtraction,
    k: usize,
    budget: PrivacyBudget,
    method: KsaMethod,
    rng: &mut RngStream,
) -> Result<KsaSelection, AggregationError> {
    if k == 0 {
        return Err(AggregationError::InvalidInput("k must be at least 1".into()));
    }
    let kh = keyword_histogram(teacher_texts, extraction)?;
    let n = kh.keywords.len();
    let (outcome, charge) = match method {
        KsaMethod::Ptr => {
            let hist = if k >= n {
                let mut counts = kh.histogram.counts().to_vec();
                counts.resize(k + 1, 0);
                VoteHistogram::from_counts(counts)?
            } else {
                kh.histogram.clone()
            };
            let outcome = match ptr_topk(&hist, k, budget, rng)? {
                PtrOutcome::Release(idx) => {
                    KsaOutcome::Keywords(idx.into_iter().filter(|&i| i < n).map(|i| kh.keywords[i].clone()).collect())
                }
                PtrOutcome::Abstain => KsaOutcome::Abstain,
            };
            (outcome, LedgerEntry::approximate("ksa_ptr", budget.epsilon(), budget.delta()))
        }
        KsaMethod::GumbelTopk => {
            let scores = ScoreVector::from(&kh.histogram);
            let picks = gumbel_topk(&scores, Sensitivity::UNIT, budget.epsilon() / k as f64, k.min(n), rng)?;
            let words = picks.into_iter().map(|i| kh.keywords[i].clone()).collect();
            (KsaOutcome::Keywords(words), LedgerEntry::approximate("ksa_gumbel_topk", budget.epsilon(), 0.0))
        }
    };
    Ok(KsaSelection {
        outcome,
        charge: charge.with_meta("k", k),
    })
}
