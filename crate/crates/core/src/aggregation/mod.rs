//! Private in-context-learning protocols built from the mechanism primitives:
//! PATE labeling and student construction, keyword-space aggregation, and
//! token-by-token private generation.
//!
//! Every protocol reports what it spent in a [`PrivacyLedger`]; totals follow
//! basic composition unless the entry is an RDP charge.

mod fewshot;
mod ksa;
mod pate;

use thiserror::Error;

use crate::accounting::{AccountingError, PrivacyLedger, SpentBudget};
use crate::mechanisms::{CandidateDomain, MechanismError};

pub use fewshot::{fewshotgen_generate, fewshotgen_next_token, GenerationBudget, GenerationOutput};
pub use ksa::{keyword_histogram, ksa_select, whitespace_keywords, KeywordExtraction, KeywordHistogram, KsaMethod, KsaOutcome, KsaSelection};
pub use pate::{gnmax_charge, pate_label, promptpate_build_student, promptpategen_build_student, PateLabel, PromptPateGenConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregationError {
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("teacher {teacher} answered {answer}, outside the domain of size {domain_size}")]
    AnswerOutOfDomain {
        teacher: usize,
        answer: usize,
        domain_size: usize,
    },
    #[error("teacher {teacher} failed: {message}")]
    Teacher { teacher: usize, message: String },
    #[error("no keywords extracted from teacher outputs")]
    EmptyHistogram,
    #[error("student construction failed: {0}")]
    StudentConstruction(String),
}

/// Classification teachers: each returns a candidate index for a query.
pub trait LabelEnsemble<Q: ?Sized> {
    fn n_teachers(&self) -> usize;
    fn domain(&self) -> &CandidateDomain;
    fn answer(&self, query: &Q, teacher: usize) -> usize;
}

/// Generation teachers: each returns free text for a query.
pub trait TextEnsemble<Q: ?Sized> {
    fn n_teachers(&self) -> usize;
    fn respond(&self, query: &Q, teacher: usize) -> String;
}

/// Next-token proposers, one per disjoint private subset.
///
/// Every subset sees the same privately selected prefix at every step.
pub trait TokenEnsemble {
    fn n_subsets(&self) -> usize;
    fn propose(&self, subset: usize, prefix: &[usize]) -> Result<usize, String>;
}

/// One in-context example: a public input paired with a privately produced output.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Shot<Q, L> {
    pub input: Q,
    pub output: L,
}

/// A public prompt distilled from private teachers.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StudentPrompt<Q, L> {
    pub shots: Vec<Shot<Q, L>>,
    /// Index into the public inputs for each shot.
    pub provenance: Vec<usize>,
    pub ledger: PrivacyLedger,
}

impl<Q, L> StudentPrompt<Q, L> {
    pub fn empty() -> Self {
        Self {
            shots: Vec::new(),
            provenance: Vec::new(),
            ledger: PrivacyLedger::new(),
        }
    }

    /// Basic-composition total of the (ε, δ) charges.
    pub fn spent(&self) -> SpentBudget {
        self.ledger.basic_total()
    }
}
