//! Differential-privacy selection and noise primitives.
//!
//! All mechanisms assume add/remove-one-record adjacency, under which a vote
//! histogram has count sensitivity 1. Ties, whether in true counts or in
//! noisy scores, resolve to the lowest candidate index.

mod topk;
mod types;

use thiserror::Error;

use crate::rng::RngStream;

pub use topk::{gumbel_topk, limited_domain_max, ptr_topk, LimitedDomainOutcome, PtrOutcome};
pub use types::{CandidateDomain, PrivacyBudget, ScoreVector, Sensitivity, VoteHistogram};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl MechanismError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MechanismError::InvalidInput(msg.into())
    }
}

/// Noise family for [`report_noisy_max`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoisyMaxNoise {
    /// Laplace noise with the given scale `b`.
    Laplace { scale: f64 },
    /// Gaussian noise with standard deviation `sigma`.
    Gaussian { sigma: f64 },
}

impl NoisyMaxNoise {
    /// Laplace noise of scale `1/epsilon`, which makes report-noisy-max ε-DP
    /// on count histograms under add/remove adjacency.
    pub fn laplace_for_epsilon(epsilon: f64) -> Result<Self, MechanismError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(MechanismError::invalid(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        Ok(NoisyMaxNoise::Laplace { scale: 1.0 / epsilon })
    }

    fn validate(self) -> Result<Self, MechanismError> {
        let p = match self {
            NoisyMaxNoise::Laplace { scale } => scale,
            NoisyMaxNoise::Gaussian { sigma } => sigma,
        };
        if p > 0.0 && p.is_finite() {
            Ok(self)
        } else {
            Err(MechanismError::invalid(format!("noise scale must be positive and finite, got {p}")))
        }
    }

    fn sample(self, rng: &mut RngStream) -> f64 {
        match self {
            NoisyMaxNoise::Laplace { scale } => rng.laplace(scale),
            NoisyMaxNoise::Gaussian { sigma } => sigma * rng.standard_normal(),
        }
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every value.
pub fn gaussian_noise(values: &[f64], sigma: f64, rng: &mut RngStream) -> Result<Vec<f64>, MechanismError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(MechanismError::invalid(format!("sigma must be nonnegative and finite, got {sigma}")));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(MechanismError::invalid(format!("value {i} is not finite")));
    }
    if sigma == 0.0 {
        return Ok(values.to_vec());
    }
    Ok(values.iter().map(|v| v + sigma * rng.standard_normal()).collect())
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Report-noisy-max: perturbs each count independently and returns the argmax.
pub fn report_noisy_max(hist: &VoteHistogram, noise: NoisyMaxNoise, rng: &mut RngStream) -> Result<usize, MechanismError> {
    let noise = noise.validate()?;
    if hist.is_empty() {
        return Err(MechanismError::invalid("empty domain"));
    }
    let noisy: Vec<f64> = hist.counts().iter().map(|&c| c as f64 + noise.sample(rng)).collect();
    Ok(argmax(&noisy))
}

/// Gaussian noisy argmax over vote counts, the PATE release primitive.
pub fn gnmax(hist: &VoteHistogram, sigma: f64, rng: &mut RngStream) -> Result<usize, MechanismError> {
    report_noisy_max(hist, NoisyMaxNoise::Gaussian { sigma }, rng)
}

fn check_epsilon(epsilon: f64) -> Result<(), MechanismError> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(MechanismError::invalid(format!("epsilon must be positive and finite, got {epsilon}")))
    }
}

/// Selection probabilities `P(r) ∝ exp(ε q(r) / (2Δq))`, normalised after
/// subtracting the maximum score.
pub fn exponential_mechanism_probabilities(
    scores: &ScoreVector,
    sensitivity: Sensitivity,
    epsilon: f64,
) -> Result<Vec<f64>, MechanismError> {
    check_epsilon(epsilon)?;
    let s = scores.scores();
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let factor = epsilon / (2.0 * sensitivity.value());
    let weights: Vec<f64> = s.iter().map(|q| (factor * (q - max)).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Samples one candidate from the exponential mechanism.
pub fn exponential_mechanism(
    scores: &ScoreVector,
    sensitivity: Sensitivity,
    epsilon: f64,
    rng: &mut RngStream,
) -> Result<usize, MechanismError> {
    let probs = exponential_mechanism_probabilities(scores, sensitivity, epsilon)?;
    let u = rng.unit();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding gap above the accumulated sum; take the last
    // candidate with positive mass.
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}
