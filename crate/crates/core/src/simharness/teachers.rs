//! Simulated teachers and a recorded-transcript ensemble.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::aggregation::{LabelEnsemble, TextEnsemble, TokenEnsemble};
use crate::mechanisms::CandidateDomain;
use crate::rng::RngStream;

/// How a teacher errs when it does not answer correctly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorModel {
    #[default]
    UniformOverWrong,
    /// `matrix[truth][answer]`; rows sum to one.
    ConfusionMatrix { matrix: Vec<Vec<f64>> },
}

/// A teacher described only by its accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTeacherModel {
    pub accuracy: f64,
    pub domain_size: usize,
    #[serde(default)]
    pub error_model: ErrorModel,
}

const ROW_TOLERANCE: f64 = 1e-9;
const DIAGONAL_TOLERANCE: f64 = 1e-6;

impl SimTeacherModel {
    pub fn uniform(accuracy: f64, domain_size: usize) -> Result<Self, SimError> {
        let m = SimTeacherModel {
            accuracy,
            domain_size,
            error_model: ErrorModel::UniformOverWrong,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(SimError::config("teacher.accuracy", format!("must lie in [0, 1], got {}", self.accuracy)));
        }
        if self.domain_size == 0 {
            return Err(SimError::config("teacher.domain_size", "must be positive"));
        }
        match &self.error_model {
            ErrorModel::UniformOverWrong => {
                if self.domain_size == 1 && self.accuracy < 1.0 {
                    return Err(SimError::config(
                        "teacher.accuracy",
                        "a one-candidate domain has no wrong answers, so accuracy must be 1",
                    ));
                }
            }
            ErrorModel::ConfusionMatrix { matrix } => {
                let k = self.domain_size;
                if matrix.len() != k || matrix.iter().any(|r| r.len() != k) {
                    return Err(SimError::config("teacher.error_model.matrix", format!("must be {k}x{k}")));
                }
                for (i, row) in matrix.iter().enumerate() {
                    if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                        return Err(SimError::config("teacher.error_model.matrix", format!("row {i} has an entry outside [0, 1]")));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > ROW_TOLERANCE {
                        return Err(SimError::config("teacher.error_model.matrix", format!("row {i} sums to {s}")));
                    }
                }
                let diag = (0..k).map(|i| matrix[i][i]).sum::<f64>() / k as f64;
                if (diag - self.accuracy).abs() > DIAGONAL_TOLERANCE {
                    return Err(SimError::config(
                        "teacher.accuracy",
                        format!("mean confusion diagonal is {diag}, accuracy says {}", self.accuracy),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Answer distribution given the true label.
    pub fn answer_distribution(&self, truth: usize) -> Vec<f64> {
        match &self.error_model {
            ErrorModel::UniformOverWrong => {
                let k = self.domain_size;
                let wrong = if k > 1 { (1.0 - self.accuracy) / (k - 1) as f64 } else { 0.0 };
                let mut row = vec![wrong; k];
                row[truth] = if k > 1 { self.accuracy } else { 1.0 };
                row
            }
            ErrorModel::ConfusionMatrix { matrix } => matrix[truth].clone(),
        }
    }

    /// Draws one answer.
    pub fn answer(&self, truth: usize, rng: &mut RngStream) -> usize {
        match &self.error_model {
            ErrorModel::UniformOverWrong => {
                let u = rng.unit();
                if u < self.accuracy || self.domain_size == 1 {
                    truth
                } else {
                    let r = rng.below(self.domain_size - 1);
                    if r >= truth {
                        r + 1
                    } else {
                        r
                    }
                }
            }
            ErrorModel::ConfusionMatrix { matrix } => {
                let u = rng.unit();
                let row = &matrix[truth];
                let mut acc = 0.0;
                for (i, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
                // Rounding left u above the last partial sum.
                row.iter().rposition(|p| *p > 0.0).unwrap_or(truth)
            }
        }
    }
}

/// A classification query with its hidden ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimQuery {
    pub index: u64,
    pub truth: usize,
}

/// Independent simulated teachers. Teacher `t` answering query `i` draws from
/// the stream `root.derive(i).derive(t)`, so answers do not depend on call order.
#[derive(Clone, Debug)]
pub struct SimClassEnsemble {
    model: SimTeacherModel,
    domain: CandidateDomain,
    n_teachers: usize,
    root: RngStream,
}

impl SimClassEnsemble {
    pub fn new(model: SimTeacherModel, n_teachers: usize, root: RngStream) -> Result<Self, SimError> {
        model.validate()?;
        if n_teachers == 0 {
            return Err(SimError::config("n_teachers", "must be positive"));
        }
        let domain = CandidateDomain::new(model.domain_size)?;
        Ok(SimClassEnsemble {
            model,
            domain,
            n_teachers,
            root,
        })
    }

    pub fn model(&self) -> &SimTeacherModel {
        &self.model
    }
}

impl LabelEnsemble<SimQuery> for SimClassEnsemble {
    fn n_teachers(&self) -> usize {
        self.n_teachers
    }

    fn domain(&self) -> &CandidateDomain {
        &self.domain
    }

    fn answer(&self, query: &SimQuery, teacher: usize) -> usize {
        let mut rng = self.root.derive(query.index).derive(teacher as u64);
        self.model.answer(query.truth, &mut rng)
    }
}

/// Token-level teachers for one target sequence. Subset `s` proposing the
/// token at position `t` is right with the model's accuracy, independent of
/// the prefix.
#[derive(Clone, Debug)]
pub struct SimTokenEnsemble {
    model: SimTeacherModel,
    target: Vec<usize>,
    n_subsets: usize,
    root: RngStream,
}

impl SimTokenEnsemble {
    pub fn new(model: SimTeacherModel, target: Vec<usize>, n_subsets: usize, root: RngStream) -> Result<Self, SimError> {
        model.validate()?;
        if n_subsets == 0 {
            return Err(SimError::config("n_teachers", "must be positive"));
        }
        if let Some(t) = target.iter().find(|t| **t >= model.domain_size) {
            return Err(SimError::config("target", format!("token {t} outside vocabulary of {}", model.domain_size)));
        }
        Ok(SimTokenEnsemble {
            model,
            target,
            n_subsets,
            root,
        })
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }
}

impl TokenEnsemble for SimTokenEnsemble {
    fn n_subsets(&self) -> usize {
        self.n_subsets
    }

    fn propose(&self, subset: usize, prefix: &[usize]) -> Result<usize, String> {
        let pos = prefix.len();
        let truth = *self
            .target
            .get(pos)
            .ok_or_else(|| format!("position {pos} is past the target length {}", self.target.len()))?;
        let mut rng = self.root.derive(subset as u64).derive(pos as u64);
        Ok(self.model.answer(truth, &mut rng))
    }
}

/// Keyword name used by the simulated text teachers.
pub fn sim_keyword(id: usize) -> String {
    format!("w{id}")
}

/// Text teachers that mention each target keyword with probability
/// `accuracy` and add `noise_keywords` distinct off-target keywords.
#[derive(Clone, Debug)]
pub struct SimTextEnsemble {
    accuracy: f64,
    vocab_size: usize,
    target: Vec<usize>,
    noise_keywords: usize,
    n_teachers: usize,
    root: RngStream,
}

impl SimTextEnsemble {
    pub fn new(
        accuracy: f64,
        vocab_size: usize,
        target: Vec<usize>,
        noise_keywords: usize,
        n_teachers: usize,
        root: RngStream,
    ) -> Result<Self, SimError> {
        if target.len() + noise_keywords > vocab_size {
            return Err(SimError::config(
                "generation.noise_keywords",
                format!("{} target plus {noise_keywords} noise keywords exceed vocabulary {vocab_size}", target.len()),
            ));
        }
        Ok(SimTextEnsemble {
            accuracy,
            vocab_size,
            target,
            noise_keywords,
            n_teachers,
            root,
        })
    }

    pub fn target_keywords(&self) -> Vec<String> {
        self.target.iter().map(|t| sim_keyword(*t)).collect()
    }
}

impl TextEnsemble<()> for SimTextEnsemble {
    fn n_teachers(&self) -> usize {
        self.n_teachers
    }

    fn respond(&self, _query: &(), teacher: usize) -> String {
        let mut rng = self.root.derive(teacher as u64);
        let mut words: Vec<String> = Vec::new();
        for &t in &self.target {
            if rng.unit() < self.accuracy {
                words.push(sim_keyword(t));
            }
        }
        let mut off: Vec<usize> = (0..self.vocab_size).filter(|v| !self.target.contains(v)).collect();
        for i in 0..self.noise_keywords {
            let j = i + rng.below(off.len() - i);
            off.swap(i, j);
            words.push(sim_keyword(off[i]));
        }
        words.join(" ")
    }
}

/// Mock wire format: teacher responses recorded ahead of time.
///
/// ```json
/// { "domain_size": 3, "labels": [[0, 0, 2], [1, 1, 1]], "texts": [["paris france", "paris"]] }
/// ```
/// `labels[q][t]` is teacher `t`'s label for query `q`; `texts[q][t]` its text.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordedTranscript {
    #[serde(default)]
    pub domain_size: usize,
    #[serde(default)]
    pub labels: Vec<Vec<usize>>,
    #[serde(default)]
    pub texts: Vec<Vec<String>>,
}

/// [`RecordedTranscript`] replayed as an ensemble; queries are row indices.
#[derive(Clone, Debug)]
pub struct RecordedEnsemble {
    transcript: RecordedTranscript,
    domain: CandidateDomain,
    n_teachers: usize,
}

impl RecordedEnsemble {
    pub fn new(transcript: RecordedTranscript) -> Result<Self, SimError> {
        let widths: Vec<usize> = transcript
            .labels
            .iter()
            .map(Vec::len)
            .chain(transcript.texts.iter().map(Vec::len))
            .collect();
        let n_teachers = widths.first().copied().unwrap_or(0);
        if n_teachers == 0 || widths.iter().any(|w| *w != n_teachers) {
            return Err(SimError::config("labels", "every row must list the same positive number of teachers"));
        }
        if !transcript.labels.is_empty() && transcript.domain_size == 0 {
            return Err(SimError::config("domain_size", "must be positive when labels are present"));
        }
        let domain = CandidateDomain::new(transcript.domain_size.max(1))?;
        Ok(RecordedEnsemble {
            transcript,
            domain,
            n_teachers,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let t: RecordedTranscript = serde_json::from_str(text).map_err(|e| SimError::config("transcript", e.to_string()))?;
        Self::new(t)
    }

    pub fn n_label_queries(&self) -> usize {
        self.transcript.labels.len()
    }

    pub fn n_text_queries(&self) -> usize {
        self.transcript.texts.len()
    }
}

impl LabelEnsemble<usize> for RecordedEnsemble {
    fn n_teachers(&self) -> usize {
        self.n_teachers
    }

    fn domain(&self) -> &CandidateDomain {
        &self.domain
    }

    /// Panics if `query` is not a recorded row.
    fn answer(&self, query: &usize, teacher: usize) -> usize {
        self.transcript.labels[*query][teacher]
    }
}

impl TextEnsemble<usize> for RecordedEnsemble {
    fn n_teachers(&self) -> usize {
        self.n_teachers
    }

    /// Panics if `query` is not a recorded row.
    fn respond(&self, query: &usize, teacher: usize) -> String {
        self.transcript.texts[*query][teacher].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_matrix_validation() {
        let ok = SimTeacherModel {
            accuracy: 0.8,
            domain_size: 2,
            error_model: ErrorModel::ConfusionMatrix {
                matrix: vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            },
        };
        ok.validate().unwrap();
        let mut bad = ok.clone();
        bad.accuracy = 0.5;
        assert!(bad.validate().is_err());
        bad.accuracy = 0.8;
        bad.error_model = ErrorModel::ConfusionMatrix {
            matrix: vec![vec![0.9, 0.2], vec![0.3, 0.7]],
        };
        assert!(bad.validate().is_err());
        assert!(SimTeacherModel::uniform(0.5, 1).is_err());
        assert!(SimTeacherModel::uniform(1.1, 3).is_err());
    }

    #[test]
    fn answer_frequencies_follow_the_model() {
        let m = SimTeacherModel::uniform(0.7, 4).unwrap();
        let mut rng = RngStream::from_seed(5);
        let n = 100_000;
        let mut c = [0usize; 4];
        for _ in 0..n {
            c[m.answer(2, &mut rng)] += 1;
        }
        let expect = m.answer_distribution(2);
        for i in 0..4 {
            assert!((c[i] as f64 / n as f64 - expect[i]).abs() < 0.01, "{c:?}");
        }
    }

    #[test]
    fn ensemble_answers_are_order_free() {
        let e = SimClassEnsemble::new(SimTeacherModel::uniform(0.5, 3).unwrap(), 5, RngStream::from_seed(9)).unwrap();
        let q = SimQuery { index: 4, truth: 1 };
        let a: Vec<usize> = (0..5).map(|t| e.answer(&q, t)).collect();
        let b: Vec<usize> = (0..5).rev().map(|t| e.answer(&q, t)).rev().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn text_teachers() {
        let e = SimTextEnsemble::new(1.0, 10, vec![3, 7], 2, 4, RngStream::from_seed(1)).unwrap();
        let r = e.respond(&(), 0);
        let words: Vec<&str> = r.split(' ').collect();
        assert_eq!(&words[..2], &["w3", "w7"]);
        assert_eq!(words.len(), 4);
        assert!(SimTextEnsemble::new(1.0, 3, vec![0, 1], 2, 4, RngStream::from_seed(1)).is_err());
    }

    #[test]
    fn recorded_transcript() {
        let e = RecordedEnsemble::from_json(r#"{"domain_size": 3, "labels": [[0, 0, 2]], "texts": [["a", "b", "c"]]}"#).unwrap();
        assert_eq!(LabelEnsemble::n_teachers(&e), 3);
        assert_eq!(e.answer(&0, 2), 2);
        assert_eq!(e.respond(&0, 1), "b");
        assert!(RecordedEnsemble::from_json(r#"{"domain_size": 3, "labels": [[0, 0], [1]]}"#).is_err());
        assert!(RecordedEnsemble::from_json(r#"{"labls": []}"#).is_err());
    }
}
