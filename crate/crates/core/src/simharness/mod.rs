//! Simulated-teacher scenarios that trace privacy-utility curves, plus the
//! exact-distribution oracles used to check the mechanisms.

mod oracle;
mod scenario;
mod teachers;

use thiserror::Error;

use crate::accounting::AccountingError;
use crate::aggregation::AggregationError;
use crate::mechanisms::MechanismError;

pub use oracle::{
    dp_ratio_audit, empirical_distribution, exact_mechanism_distribution, majority_vote_accuracy, total_variation,
    AuditReport, MechanismSpec, AUDIT_SLACK, MAX_AUDIT_COUNT, MAX_ORACLE_DOMAIN,
};
pub use scenario::{
    classification_limit_point, default_epsilon_grid, keyword_id, paired_monotonicity, simulate,
    simulate_classification, simulate_generation, simulate_with_threads, GenerationShape, MonotoneStep,
    ScenarioConfig, ScenarioMechanism, TradeoffCurve, TradeoffPoint,
};
pub use teachers::{
    sim_keyword, ErrorModel, RecordedEnsemble, RecordedTranscript, SimClassEnsemble, SimQuery, SimTeacherModel,
    SimTextEnsemble, SimTokenEnsemble,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid {field}: {message}")]
    Config { field: String, message: String },
    #[error("domain of size {size} exceeds the oracle limit of {max}")]
    DomainTooLarge { size: usize, max: usize },
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SimError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
