use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::MechanismError;

/// The finite output space a selection mechanism chooses from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateDomain {
    size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl CandidateDomain {
    pub fn new(size: usize) -> Result<Self, MechanismError> {
        if size == 0 {
            return Err(MechanismError::invalid("domain size must be at least 1"));
        }
        Ok(Self { size, labels: None })
    }

    pub fn with_labels<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, MechanismError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(MechanismError::invalid("domain size must be at least 1"));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(MechanismError::invalid(format!("duplicate domain label {l:?}")));
            }
        }
        Ok(Self {
            size: labels.len(),
            labels: Some(labels),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.as_ref().and_then(|l| l.get(index)).map(String::as_str)
    }
}

/// Nonnegative vote counts, one per candidate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteHistogram {
    domain: CandidateDomain,
    counts: Vec<u64>,
}

impl VoteHistogram {
    pub fn new(domain: CandidateDomain, counts: Vec<u64>) -> Result<Self, MechanismError> {
        if counts.len() != domain.size() {
            return Err(MechanismError::invalid(format!(
                "histogram has {} counts for a domain of size {}",
                counts.len(),
                domain.size()
            )));
        }
        Ok(Self { domain, counts })
    }

    /// Histogram over an unlabeled domain sized to `counts`.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self, MechanismError> {
        let domain = CandidateDomain::new(counts.len())?;
        Self::new(domain, counts)
    }

    /// Tallies `votes` into a histogram over `domain`.
    pub fn from_votes(domain: CandidateDomain, votes: impl IntoIterator<Item = usize>) -> Result<Self, MechanismError> {
        let mut counts = vec![0u64; domain.size()];
        for v in votes {
            let slot = counts
                .get_mut(v)
                .ok_or_else(|| MechanismError::invalid(format!("vote {v} outside domain of size {}", domain.size())))?;
            *slot += 1;
        }
        Ok(Self { domain, counts })
    }

    pub fn domain(&self) -> &CandidateDomain {
        &self.domain
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Counts as reals, for noise addition.
    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Candidate indices sorted by count descending, ties by lowest index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.counts.len()).collect();
        idx.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        idx
    }

    /// The histogram with one extra vote for `candidate`.
    pub fn with_added_vote(&self, candidate: usize) -> Result<Self, MechanismError> {
        let mut out = self.clone();
        let slot = out
            .counts
            .get_mut(candidate)
            .ok_or_else(|| MechanismError::invalid(format!("candidate {candidate} outside domain")))?;
        *slot += 1;
        Ok(out)
    }
}

/// Real-valued quality scores, one per candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    domain: CandidateDomain,
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(domain: CandidateDomain, scores: Vec<f64>) -> Result<Self, MechanismError> {
        if scores.len() != domain.size() {
            return Err(MechanismError::invalid(format!(
                "score vector has {} entries for a domain of size {}",
                scores.len(),
                domain.size()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(MechanismError::invalid(format!("score {i} is not finite")));
        }
        Ok(Self { domain, scores })
    }

    pub fn from_scores(scores: Vec<f64>) -> Result<Self, MechanismError> {
        let domain = CandidateDomain::new(scores.len())?;
        Self::new(domain, scores)
    }

    pub fn domain(&self) -> &CandidateDomain {
        &self.domain
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl From<&VoteHistogram> for ScoreVector {
    fn from(h: &VoteHistogram) -> Self {
        Self {
            domain: h.domain.clone(),
            scores: h.as_f64(),
        }
    }
}

/// Sensitivity of a score function, Δq > 0.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Sensitivity(f64);

impl Sensitivity {
    pub const UNIT: Sensitivity = Sensitivity(1.0);

    pub fn new(value: f64) -> Result<Self, MechanismError> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(MechanismError::invalid(format!("sensitivity must be positive and finite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Sensitivity {
    type Error = MechanismError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Sensitivity> for f64 {
    fn from(s: Sensitivity) -> f64 {
        s.0
    }
}

/// An (ε, δ) pair parameterising a single private release.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBudget", into = "RawBudget")]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBudget {
    epsilon: f64,
    #[serde(default)]
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, MechanismError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(MechanismError::invalid(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(MechanismError::invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self, MechanismError> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl TryFrom<RawBudget> for PrivacyBudget {
    type Error = MechanismError;
    fn try_from(r: RawBudget) -> Result<Self, Self::Error> {
        Self::new(r.epsilon, r.delta)
    }
}

impl From<PrivacyBudget> for RawBudget {
    fn from(b: PrivacyBudget) -> Self {
        RawBudget {
            epsilon: b.epsilon,
            delta: b.delta,
        }
    }
}
