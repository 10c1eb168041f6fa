//! Privacy accounting: RDP curves for (subsampled) Gaussian mechanisms,
//! composition, (ε, δ) conversion, noise calibration and budget ledgers.

mod calibrate;
mod ledger;
mod rdp;

use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::PrivacyBudget;

pub use calibrate::{calibrate_sigma, calibrate_sigma_with_orders, dpsgd_curve, dpsgd_epsilon, Calibration};
pub use ledger::{Charge, ExportedEntry, LedgerEntry, PrivacyLedger};
pub use rdp::{
    compose, default_orders, rdp_gaussian, rdp_subsampled_gaussian, to_eps_delta, EpsilonAtDelta, RdpCurve,
    SubsampledGaussianParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountingError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
}

impl AccountingError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AccountingError::InvalidInput(msg.into())
    }
}

/// Accumulated (ε, δ) spend. Unlike [`PrivacyBudget`] this may be zero, and
/// δ may exceed 1 when many δ-charges are summed (the guarantee is then vacuous).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpentBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl SpentBudget {
    pub const ZERO: SpentBudget = SpentBudget { epsilon: 0.0, delta: 0.0 };
}

impl Add for SpentBudget {
    type Output = SpentBudget;
    fn add(self, rhs: SpentBudget) -> SpentBudget {
        SpentBudget {
            epsilon: self.epsilon + rhs.epsilon,
            delta: self.delta + rhs.delta,
        }
    }
}

impl From<PrivacyBudget> for SpentBudget {
    fn from(b: PrivacyBudget) -> Self {
        SpentBudget {
            epsilon: b.epsilon(),
            delta: b.delta(),
        }
    }
}

/// Basic composition: `n` calls at `per_call` cost `(n·ε, n·δ)`.
pub fn basic_composition(per_call: PrivacyBudget, n_calls: u64) -> Result<SpentBudget, AccountingError> {
    let n = n_calls as f64;
    let out = SpentBudget {
        epsilon: per_call.epsilon() * n,
        delta: per_call.delta() * n,
    };
    if out.epsilon.is_finite() && out.delta.is_finite() {
        Ok(out)
    } else {
        Err(AccountingError::invalid(format!("composition of {n_calls} calls overflows")))
    }
}

/// How δ is chosen for a conversion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaConvention {
    Explicit(f64),
    /// δ = 1/n for a dataset of n records.
    OneOverN(u64),
}

impl DeltaConvention {
    pub fn resolve(self) -> Result<f64, AccountingError> {
        let d = match self {
            DeltaConvention::Explicit(d) => d,
            DeltaConvention::OneOverN(0) => f64::INFINITY,
            DeltaConvention::OneOverN(n) => 1.0 / n as f64,
        };
        if d > 0.0 && d < 1.0 {
            Ok(d)
        } else {
            Err(AccountingError::invalid(format!("delta convention {self:?} does not give a delta in (0, 1)")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_composition_examples() {
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        assert_eq!(basic_composition(b, 0).unwrap(), SpentBudget::ZERO);
        let s = basic_composition(b, 8).unwrap();
        assert_eq!(s.epsilon, 8.0);
        assert!((s.delta - 8e-6).abs() < 1e-20);
        let big = PrivacyBudget::new(1e300, 0.0).unwrap();
        assert!(basic_composition(big, u64::MAX).is_err());
    }

    #[test]
    fn delta_conventions() {
        assert_eq!(DeltaConvention::OneOverN(1000).resolve().unwrap(), 1e-3);
        assert!(DeltaConvention::OneOverN(1).resolve().is_err());
        assert!(DeltaConvention::OneOverN(0).resolve().is_err());
        assert!(DeltaConvention::Explicit(0.0).resolve().is_err());
        let d: DeltaConvention = serde_json::from_str(r#"{"one_over_n": 200}"#).unwrap();
        assert_eq!(d.resolve().unwrap(), 0.005);
    }
}
