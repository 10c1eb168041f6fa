//! API-token and GPU-hour cost estimates for private adaptation methods.
//!
//! A query sends the instruction, the query input and every in-context shot
//! (input plus output) and receives one output; ensembles multiply that by
//! the number of teachers. Arithmetic is kept at full precision and only
//! rounded to cents for display.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TOKENS_PER_PRICE_UNIT: f64 = 1_000_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("unknown hardware {0:?}")]
    UnknownHardware(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Dollars per million input and output tokens.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input_price: f64,
    pub output_price: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingTable {
    #[serde(default)]
    pub models: BTreeMap<String, ModelPrice>,
    /// Dollars per GPU hour.
    #[serde(default)]
    pub hardware: BTreeMap<String, f64>,
}

impl PricingTable {
    /// API and A40 cloud prices as of May 2024.
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../data/pricing.json")).expect("bundled pricing table parses")
    }

    pub fn validate(&self) -> Result<(), CostError> {
        for (name, p) in &self.models {
            if !(p.input_price >= 0.0 && p.output_price >= 0.0) || !p.input_price.is_finite() || !p.output_price.is_finite() {
                return Err(CostError::InvalidInput(format!("model {name:?} has a negative or non-finite price")));
            }
        }
        for (name, rate) in &self.hardware {
            if !(*rate >= 0.0 && rate.is_finite()) {
                return Err(CostError::InvalidInput(format!("hardware {name:?} has a negative or non-finite rate")));
            }
        }
        Ok(())
    }

    pub fn model(&self, name: &str) -> Result<ModelPrice, CostError> {
        self.models.get(name).copied().ok_or_else(|| CostError::UnknownModel(name.to_owned()))
    }

    pub fn hourly_rate(&self, hardware: &str) -> Result<f64, CostError> {
        self.hardware
            .get(hardware)
            .copied()
            .ok_or_else(|| CostError::UnknownHardware(hardware.to_owned()))
    }
}

/// Average token counts per example; instructions are counted separately.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenProfile {
    #[serde(default)]
    pub avg_input_tokens: f64,
    #[serde(default)]
    pub avg_output_tokens: f64,
    #[serde(default)]
    pub instruction_tokens: f64,
}

impl TokenProfile {
    /// Average input/output lengths of the benchmark datasets, keyed by name.
    pub fn builtin() -> BTreeMap<String, TokenProfile> {
        serde_json::from_str(include_str!("../data/token_profiles.json")).expect("bundled token profiles parse")
    }

    fn validate(&self) -> Result<(), CostError> {
        let all = [self.avg_input_tokens, self.avg_output_tokens, self.instruction_tokens];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(CostError::InvalidInput("token counts must be nonnegative".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryWorkload {
    pub n_queries: u64,
    #[serde(default)]
    pub n_shots: u64,
    #[serde(default = "one")]
    pub ensemble_size: u64,
    pub profile: TokenProfile,
}

fn one() -> u64 {
    1
}

impl QueryWorkload {
    pub fn validate(&self) -> Result<(), CostError> {
        if self.ensemble_size == 0 {
            return Err(CostError::InvalidInput("ensemble_size must be at least 1".into()));
        }
        self.profile.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainWorkload {
    pub gpu_hours: f64,
    pub hardware: String,
}

/// Tokens sent and received by one teacher for one query:
/// `instruction + input + shots·(input + output)` in, `output` out.
pub fn per_query_tokens(w: &QueryWorkload) -> (f64, f64) {
    let p = &w.profile;
    let input = p.instruction_tokens + p.avg_input_tokens + w.n_shots as f64 * (p.avg_input_tokens + p.avg_output_tokens);
    (input, p.avg_output_tokens)
}

/// Dollar cost of answering `n_queries` with every ensemble member.
pub fn query_cost(pricing: &PricingTable, model: &str, w: &QueryWorkload) -> Result<f64, CostError> {
    w.validate()?;
    let price = pricing.model(model)?;
    let (input, output) = per_query_tokens(w);
    let per_call = (input * price.input_price + output * price.output_price) / TOKENS_PER_PRICE_UNIT;
    Ok(w.n_queries as f64 * w.ensemble_size as f64 * per_call)
}

pub fn train_cost(pricing: &PricingTable, w: &TrainWorkload) -> Result<f64, CostError> {
    if !(w.gpu_hours >= 0.0 && w.gpu_hours.is_finite()) {
        return Err(CostError::InvalidInput(format!("gpu_hours must be nonnegative, got {}", w.gpu_hours)));
    }
    Ok(w.gpu_hours * pricing.hourly_rate(&w.hardware)?)
}

/// What a private adaptation method spends on training and on querying.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainWorkload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<QueryWorkload>,
}

/// Training, query and total cost in dollars, unrounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub train: f64,
    pub query: f64,
    pub all: f64,
}

pub fn round_cents(dollars: f64) -> f64 {
    (dollars * 100.0).round() / 100.0
}

impl CostReport {
    /// The report with every field rounded to cents.
    pub fn rounded(&self) -> CostReport {
        CostReport {
            train: round_cents(self.train),
            query: round_cents(self.query),
            all: round_cents(self.all),
        }
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T($) {:.2}  Q($) {:.2}  All($) {:.2}", self.train, self.query, self.all)
    }
}

pub fn method_cost_report(pricing: &PricingTable, method: &MethodDescriptor) -> Result<CostReport, CostError> {
    let train = method.train.as_ref().map(|t| train_cost(pricing, t)).transpose()?.unwrap_or(0.0);
    let query = match &method.query {
        Some(q) => {
            let model = method
                .model
                .as_deref()
                .ok_or_else(|| CostError::InvalidInput("a query workload needs a model".into()))?;
            query_cost(pricing, model, q)?
        }
        None => 0.0,
    };
    Ok(CostReport {
        train,
        query,
        all: train + query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samsum() -> TokenProfile {
        TokenProfile::builtin()["SAMSum"]
    }

    fn workload(n_queries: u64, n_shots: u64, ensemble_size: u64) -> QueryWorkload {
        QueryWorkload {
            n_queries,
            n_shots,
            ensemble_size,
            profile: samsum(),
        }
    }

    #[test]
    fn builtin_tables_load() {
        let p = PricingTable::builtin();
        p.validate().unwrap();
        assert_eq!(p.models.len(), 5);
        assert_eq!(p.hourly_rate("A40 (RunPod)").unwrap(), 0.69);
        assert_eq!(TokenProfile::builtin().len(), 8);
    }

    #[test]
    fn samsum_tokens() {
        let (i, o) = per_query_tokens(&workload(1, 0, 1));
        assert_eq!((i, o), (140.857, 25.620));
        let (i, o) = per_query_tokens(&workload(1, 1, 1));
        assert!((i - 307.334).abs() < 1e-9);
        assert_eq!(o, 25.620);
        let empty = QueryWorkload {
            n_queries: 1,
            n_shots: 0,
            ensemble_size: 1,
            profile: TokenProfile::default(),
        };
        assert_eq!(per_query_tokens(&empty), (0.0, 0.0));
    }

    #[test]
    fn samsum_davinci_costs() {
        let p = PricingTable::builtin();
        let one = query_cost(&p, "GPT-Davinci", &workload(1, 0, 1)).unwrap();
        assert!((one - 0.000333).abs() < 5e-7, "{one}");
        let zero_shot = query_cost(&p, "GPT-Davinci", &workload(10_000, 0, 1)).unwrap();
        assert_eq!(round_cents(zero_shot), 3.33);
        let dpicl = query_cost(&p, "GPT-Davinci", &workload(10_000, 1, 100)).unwrap();
        assert_eq!(round_cents(dpicl), 665.91);
    }

    #[test]
    fn free_prices() {
        let mut p = PricingTable::builtin();
        p.models.insert("free".into(), ModelPrice { input_price: 0.0, output_price: 0.0 });
        assert_eq!(query_cost(&p, "free", &workload(10_000, 3, 100)).unwrap(), 0.0);
    }

    #[test]
    fn training_costs() {
        let p = PricingTable::builtin();
        let t = |h: f64| {
            train_cost(
                &p,
                &TrainWorkload {
                    gpu_hours: h,
                    hardware: "A40 (RunPod)".into(),
                },
            )
            .unwrap()
        };
        assert_eq!(round_cents(t(5.0)), 3.45);
        assert_eq!(t(0.0), 0.0);
        assert_eq!(round_cents(t(40.0)), 27.60);
    }

    #[test]
    fn lookups_fail_cleanly() {
        let p = PricingTable::builtin();
        assert_eq!(
            query_cost(&p, "GPT-5", &workload(1, 0, 1)).unwrap_err(),
            CostError::UnknownModel("GPT-5".into())
        );
        let t = TrainWorkload {
            gpu_hours: 1.0,
            hardware: "H100".into(),
        };
        assert!(matches!(train_cost(&p, &t), Err(CostError::UnknownHardware(_))));
        assert!(query_cost(&p, "GPT-Davinci", &workload(1, 0, 0)).is_err());
    }

    #[test]
    fn method_reports() {
        let p = PricingTable::builtin();
        let dpicl = MethodDescriptor {
            method: Some("DP-ICL".into()),
            model: Some("GPT-Davinci".into()),
            train: None,
            query: Some(workload(10_000, 1, 100)),
        };
        let r = method_cost_report(&p, &dpicl).unwrap().rounded();
        assert_eq!((r.train, r.query, r.all), (0.0, 665.91, 665.91));
        assert_eq!(method_cost_report(&p, &MethodDescriptor::default()).unwrap(), CostReport::default());
        let lora = MethodDescriptor {
            train: Some(TrainWorkload {
                gpu_hours: 5.0,
                hardware: "A40 (RunPod)".into(),
            }),
            ..Default::default()
        };
        let r = method_cost_report(&p, &lora).unwrap().rounded();
        assert_eq!((r.train, r.query, r.all), (3.45, 0.0, 3.45));
        assert_eq!(r.to_string(), "T($) 3.45  Q($) 0.00  All($) 3.45");
    }
}
