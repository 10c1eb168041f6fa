use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rdp::{compose, to_eps_delta, RdpCurve};
use super::{AccountingError, SpentBudget};

/// How a single mechanism invocation was charged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Charge {
    /// An (ε, δ) charge composed by summation.
    Approximate { epsilon: f64, delta: f64 },
    /// An RDP charge composed pointwise over orders.
    Rdp { curve: RdpCurve },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub mechanism: String,
    pub charge: Charge,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl LedgerEntry {
    pub fn approximate(mechanism: impl Into<String>, epsilon: f64, delta: f64) -> Self {
        Self {
            mechanism: mechanism.into(),
            charge: Charge::Approximate { epsilon, delta },
            metadata: BTreeMap::new(),
        }
    }

    pub fn rdp(mechanism: impl Into<String>, curve: RdpCurve) -> Self {
        Self {
            mechanism: mechanism.into(),
            charge: Charge::Rdp { curve },
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }
}

/// One exported ledger row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedEntry {
    pub mechanism: String,
    pub epsilon: f64,
    pub delta: f64,
    /// Minimising order for RDP entries.
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// Ordered record of privacy charges. A value object: callers own and merge ledgers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    entries: Vec<LedgerEntry>,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, other: PrivacyLedger) {
        self.entries.extend(other.entries);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of the (ε, δ) charges, compensated so that `k` equal charges
    /// total `k · ε` to the last bit.
    pub fn basic_total(&self) -> SpentBudget {
        let charges = || {
            self.entries.iter().filter_map(|e| match e.charge {
                Charge::Approximate { epsilon, delta } => Some((epsilon, delta)),
                Charge::Rdp { .. } => None,
            })
        };
        SpentBudget {
            epsilon: compensated_sum(charges().map(|c| c.0)),
            delta: compensated_sum(charges().map(|c| c.1)),
        }
    }

    /// Pointwise sum of the RDP charges, `None` when there are none.
    pub fn rdp_total(&self) -> Result<Option<RdpCurve>, AccountingError> {
        let curves: Vec<RdpCurve> = self
            .entries
            .iter()
            .filter_map(|e| match &e.charge {
                Charge::Rdp { curve } => Some(curve.clone()),
                Charge::Approximate { .. } => None,
            })
            .collect();
        if curves.is_empty() {
            Ok(None)
        } else {
            compose(&curves).map(Some)
        }
    }

    /// Exports every entry as (mechanism, ε, δ, α*, metadata), converting RDP
    /// charges individually at `delta`.
    pub fn export(&self, delta: f64) -> Result<Vec<ExportedEntry>, AccountingError> {
        self.entries
            .iter()
            .map(|e| {
                let (epsilon, delta, alpha) = match &e.charge {
                    Charge::Approximate { epsilon, delta } => (*epsilon, *delta, None),
                    Charge::Rdp { curve } => {
                        let c = to_eps_delta(curve, delta)?;
                        (c.epsilon, c.delta, Some(c.alpha))
                    }
                };
                Ok(ExportedEntry {
                    mechanism: e.mechanism.clone(),
                    epsilon,
                    delta,
                    alpha,
                    metadata: e.metadata.clone(),
                })
            })
            .collect()
    }
}

/// Neumaier summation.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_charges_total_exactly() {
        for (eps, n) in [(0.1, 10), (0.3, 7), (8.0 / 3.0, 30), (1e-3, 1000)] {
            let mut l = PrivacyLedger::new();
            for _ in 0..n {
                l.push(LedgerEntry::approximate("m", eps, 1e-6));
            }
            assert_eq!(l.basic_total().epsilon, n as f64 * eps);
        }
    }
    use crate::accounting::rdp::{default_orders, rdp_gaussian};

    #[test]
    fn totals_split_by_charge_kind() {
        let mut l = PrivacyLedger::new();
        l.push(LedgerEntry::approximate("em", 1.0, 0.0));
        l.push(LedgerEntry::approximate("ptr", 0.5, 1e-6));
        assert_eq!(l.rdp_total().unwrap(), None);
        let g = rdp_gaussian(2.0, &default_orders()).unwrap();
        l.push(LedgerEntry::rdp("gnmax", g.clone()));
        l.push(LedgerEntry::rdp("gnmax", g.clone()));
        let t = l.basic_total();
        assert_eq!(t.epsilon, 1.5);
        assert_eq!(t.delta, 1e-6);
        assert_eq!(l.rdp_total().unwrap().unwrap(), g.scaled(2.0));
    }

    #[test]
    fn export_converts_rdp_rows() {
        let mut l = PrivacyLedger::new();
        l.push(LedgerEntry::rdp("gaussian", rdp_gaussian(1.0, &default_orders()).unwrap()).with_meta("step", 0));
        l.push(LedgerEntry::approximate("em", 2.0, 0.0));
        let rows = l.export(1e-5).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].alpha.is_some());
        assert_eq!(rows[0].metadata["step"], "0");
        assert_eq!(rows[1].epsilon, 2.0);
        let json = serde_json::to_string(&rows).unwrap();
        assert!(json.contains("\"mechanism\":\"gaussian\""));
    }
}
