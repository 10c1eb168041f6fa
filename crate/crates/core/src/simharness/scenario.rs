//! Scenario configuration and Monte Carlo privacy-utility curves.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::teachers::{sim_keyword, SimClassEnsemble, SimQuery, SimTeacherModel, SimTextEnsemble, SimTokenEnsemble};
use super::SimError;
use crate::accounting::calibrate_sigma;
use crate::aggregation::{
    fewshotgen_generate, ksa_select, GenerationBudget, KeywordExtraction, KsaMethod, KsaOutcome, LabelEnsemble,
    TextEnsemble,
};
use crate::mechanisms::{
    exponential_mechanism, gnmax, report_noisy_max, CandidateDomain, NoisyMaxNoise, PrivacyBudget, ScoreVector,
    Sensitivity, VoteHistogram,
};
use crate::rng::RngStream;

pub fn default_epsilon_grid() -> Vec<f64> {
    vec![0.1, 0.3, 0.7, 1.0, 3.0, 8.0]
}

/// Aggregation mechanism under study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioMechanism {
    /// GNMax; σ is calibrated so one query costs (ε, δ) under Gaussian RDP.
    Gnmax { delta: f64 },
    /// Report-noisy-max with Laplace scale 1/ε.
    RnmLaplace,
    /// Exponential mechanism on vote counts, unit sensitivity.
    Exponential,
    KsaPtr { k: usize, delta: f64 },
    KsaGumbel { k: usize },
    FewShotGen,
}

impl ScenarioMechanism {
    pub fn is_generation(&self) -> bool {
        matches!(self, Self::KsaPtr { .. } | Self::KsaGumbel { .. } | Self::FewShotGen)
    }
}

/// Shape of generation scenarios.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationShape {
    /// Tokens per generated sequence.
    #[serde(default)]
    pub t_max: usize,
    /// Number of disjoint shot subsets voting on each token; defaults to `n_teachers`.
    #[serde(default)]
    pub m: Option<usize>,
    /// Total private shots, split evenly over the `m` subsets.
    #[serde(default)]
    pub mn: Option<usize>,
    /// Off-target keywords each KSA teacher adds.
    #[serde(default)]
    pub noise_keywords: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub n_teachers: usize,
    pub n_queries: usize,
    pub teacher: SimTeacherModel,
    pub mechanism: ScenarioMechanism,
    #[serde(default = "default_epsilon_grid")]
    pub epsilon_grid: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub generation: Option<GenerationShape>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: ScenarioConfig = serde_json::from_str(text).map_err(|e| SimError::config("scenario", e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (field, v) in [("n_teachers", self.n_teachers), ("n_queries", self.n_queries), ("trials", self.trials)] {
            if v == 0 {
                return Err(SimError::config(field, "must be positive"));
            }
        }
        self.teacher.validate()?;
        if self.epsilon_grid.is_empty() {
            return Err(SimError::config("epsilon_grid", "must not be empty"));
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(SimError::config("epsilon_grid", format!("entries must be positive and finite, got {e}")));
        }
        if self.epsilon_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::config("epsilon_grid", "must be strictly ascending"));
        }
        match self.mechanism {
            ScenarioMechanism::Gnmax { delta } | ScenarioMechanism::KsaPtr { delta, .. } if !(delta > 0.0 && delta < 1.0) => {
                return Err(SimError::config("mechanism.delta", format!("must lie in (0, 1), got {delta}")));
            }
            _ => {}
        }
        if let ScenarioMechanism::KsaPtr { k, .. } | ScenarioMechanism::KsaGumbel { k } = self.mechanism {
            if k == 0 || k > self.teacher.domain_size {
                return Err(SimError::config(
                    "mechanism.k",
                    format!("must lie in 1..={}, got {k}", self.teacher.domain_size),
                ));
            }
            let noise = self.shape().noise_keywords;
            if k + noise > self.teacher.domain_size {
                return Err(SimError::config(
                    "generation.noise_keywords",
                    format!("k + noise_keywords exceeds the keyword vocabulary {}", self.teacher.domain_size),
                ));
            }
        }
        let shape = self.shape();
        if shape.m == Some(0) {
            return Err(SimError::config("generation.m", "must be positive"));
        }
        if let (Some(mn), Some(m)) = (shape.mn, shape.m) {
            if mn == 0 || mn % m != 0 {
                return Err(SimError::config("generation.mn", format!("must be a positive multiple of m = {m}, got {mn}")));
            }
        }
        if self.mechanism == ScenarioMechanism::FewShotGen && self.generation.is_none() {
            return Err(SimError::config("generation", "few-shot generation needs t_max"));
        }
        Ok(())
    }

    fn shape(&self) -> GenerationShape {
        self.generation.clone().unwrap_or_default()
    }

    fn voters(&self) -> usize {
        match self.mechanism {
            ScenarioMechanism::FewShotGen => self.shape().m.unwrap_or(self.n_teachers),
            _ => self.n_teachers,
        }
    }
}

/// One grid point of a curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub epsilon: f64,
    pub utility_mean: f64,
    /// Sample standard deviation across trials (zero for a single trial).
    pub utility_std: f64,
    pub trials: usize,
    pub abstain_rate: f64,
    /// Per-trial utilities, aligned across points for paired comparisons.
    #[serde(skip)]
    pub per_trial: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub points: Vec<TradeoffPoint>,
}

#[derive(Serialize)]
struct CsvRow {
    epsilon: f64,
    utility_mean: f64,
    utility_std: f64,
    trials: usize,
    abstain_rate: f64,
}

impl TradeoffCurve {
    /// Writes `epsilon,utility_mean,utility_std,trials,abstain_rate` with LF line endings.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        for p in &self.points {
            out.serialize(CsvRow {
                epsilon: p.epsilon,
                utility_mean: p.utility_mean,
                utility_std: p.utility_std,
                trials: p.trials,
                abstain_rate: p.abstain_rate,
            })?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, SimError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Paired comparison of neighbouring grid points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotoneStep {
    pub from_epsilon: f64,
    pub to_epsilon: f64,
    pub mean_diff: f64,
    pub std_error: f64,
    /// `mean_diff ≥ -tolerance · std_error`.
    pub ok: bool,
}

/// Checks the curve is non-decreasing within `tolerance` paired standard errors.
pub fn paired_monotonicity(curve: &TradeoffCurve, tolerance: f64) -> Vec<MonotoneStep> {
    curve
        .points
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[1].per_trial.iter().zip(&w[0].per_trial).map(|(b, a)| b - a).collect();
            let (mean, std) = mean_std(&d);
            let std_error = if d.is_empty() { 0.0 } else { std / (d.len() as f64).sqrt() };
            MonotoneStep {
                from_epsilon: w[0].epsilon,
                to_epsilon: w[1].epsilon,
                mean_diff: mean,
                std_error,
                ok: mean >= -tolerance * std_error,
            }
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug)]
enum LabelNoise {
    Gnmax(f64),
    Laplace(f64),
    Exponential(f64),
    Noiseless,
}

// Stream layout under the root: 0 = teacher answers, 1 = mechanism noise,
// 2 = ground truth. Noise for (trial, query) is reused at every ε.
fn teacher_root(root: &RngStream, trial: u64) -> RngStream {
    root.derive(0).derive(trial)
}

fn noise_stream(root: &RngStream, trial: u64, query: u64) -> RngStream {
    root.derive(1).derive(trial).derive(query)
}

fn truth_stream(root: &RngStream, trial: u64) -> RngStream {
    root.derive(2).derive(trial)
}

struct TrialOutcome {
    utility: Vec<f64>,
    abstain: Vec<f64>,
}

fn classification_trial(s: &ScenarioConfig, noises: &[LabelNoise], root: &RngStream, trial: u64) -> Result<TrialOutcome, SimError> {
    let ensemble = SimClassEnsemble::new(s.teacher.clone(), s.n_teachers, teacher_root(root, trial))?;
    let domain = CandidateDomain::new(s.teacher.domain_size)?;
    let mut truth_rng = truth_stream(root, trial);
    let mut correct = vec![0usize; noises.len()];
    for q in 0..s.n_queries as u64 {
        let query = SimQuery {
            index: q,
            truth: truth_rng.below(s.teacher.domain_size),
        };
        let votes = (0..s.n_teachers).map(|t| ensemble.answer(&query, t));
        let hist = VoteHistogram::from_votes(domain.clone(), votes)?;
        for (i, noise) in noises.iter().enumerate() {
            let mut rng = noise_stream(root, trial, q);
            let label = match *noise {
                LabelNoise::Gnmax(sigma) => gnmax(&hist, sigma, &mut rng)?,
                LabelNoise::Laplace(scale) => report_noisy_max(&hist, NoisyMaxNoise::Laplace { scale }, &mut rng)?,
                LabelNoise::Exponential(eps) => exponential_mechanism(&ScoreVector::from(&hist), Sensitivity::UNIT, eps, &mut rng)?,
                LabelNoise::Noiseless => hist.ranking()[0],
            };
            if label == query.truth {
                correct[i] += 1;
            }
        }
    }
    let n = s.n_queries as f64;
    Ok(TrialOutcome {
        utility: correct.into_iter().map(|c| c as f64 / n).collect(),
        abstain: vec![0.0; noises.len()],
    })
}

fn draw_distinct(rng: &mut RngStream, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below(n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

fn generation_trial(s: &ScenarioConfig, root: &RngStream, trial: u64) -> Result<TrialOutcome, SimError> {
    let shape = s.shape();
    let grid = &s.epsilon_grid;
    let vocab = s.teacher.domain_size;
    let mut truth_rng = truth_stream(root, trial);
    let teachers = teacher_root(root, trial);
    let mut utility = vec![0.0; grid.len()];
    let mut abstain = vec![0usize; grid.len()];
    for q in 0..s.n_queries as u64 {
        match s.mechanism {
            ScenarioMechanism::FewShotGen => {
                if shape.t_max == 0 {
                    continue;
                }
                let target: Vec<usize> = (0..shape.t_max).map(|_| truth_rng.below(vocab)).collect();
                let ens = SimTokenEnsemble::new(s.teacher.clone(), target.clone(), s.voters(), teachers.derive(q))?;
                for (i, &eps) in grid.iter().enumerate() {
                    let budget = GenerationBudget::even_split(PrivacyBudget::pure(eps)?, shape.t_max)?;
                    let out = fewshotgen_generate(&ens, &budget, None, &mut noise_stream(root, trial, q))?;
                    let hits = out.tokens.iter().zip(&target).filter(|(a, b)| a == b).count();
                    utility[i] += hits as f64 / shape.t_max as f64;
                }
            }
            ScenarioMechanism::KsaPtr { k, .. } | ScenarioMechanism::KsaGumbel { k } => {
                let (method, delta) = match s.mechanism {
                    ScenarioMechanism::KsaPtr { delta, .. } => (KsaMethod::Ptr, delta),
                    _ => (KsaMethod::GumbelTopk, 0.0),
                };
                let target = draw_distinct(&mut truth_rng, vocab, k);
                let ens = SimTextEnsemble::new(s.teacher.accuracy, vocab, target, shape.noise_keywords, s.n_teachers, teachers.derive(q))?;
                let wanted = ens.target_keywords();
                let texts: Vec<String> = (0..s.n_teachers).map(|t| ens.respond(&(), t)).collect();
                let extraction = KeywordExtraction::whitespace(k + shape.noise_keywords)?;
                for (i, &eps) in grid.iter().enumerate() {
                    let budget = PrivacyBudget::new(eps, delta)?;
                    let sel = match ksa_select(&texts, &extraction, k, budget, method, &mut noise_stream(root, trial, q)) {
                        Ok(sel) => sel.outcome,
                        // No teacher mentioned any keyword.
                        Err(crate::aggregation::AggregationError::EmptyHistogram) => KsaOutcome::Abstain,
                        Err(e) => return Err(e.into()),
                    };
                    match sel {
                        KsaOutcome::Keywords(words) => {
                            let hits = words.iter().filter(|w| wanted.contains(w)).count();
                            utility[i] += hits as f64 / k as f64;
                        }
                        KsaOutcome::Abstain => abstain[i] += 1,
                    }
                }
            }
            _ => unreachable!("classification mechanisms are handled elsewhere"),
        }
    }
    let n = s.n_queries as f64;
    Ok(TrialOutcome {
        utility: utility.into_iter().map(|u| u / n).collect(),
        abstain: abstain.into_iter().map(|a| a as f64 / n).collect(),
    })
}

fn run_trials<F>(s: &ScenarioConfig, epsilons: &[f64], trial: F) -> Result<Vec<TradeoffPoint>, SimError>
where
    F: Fn(u64) -> Result<TrialOutcome, SimError> + Sync,
{
    let outcomes: Vec<TrialOutcome> = (0..s.trials as u64).into_par_iter().map(|r| trial(r)).collect::<Result<_, _>>()?;
    Ok(epsilons
        .iter()
        .enumerate()
        .map(|(i, &epsilon)| {
            let per_trial: Vec<f64> = outcomes.iter().map(|o| o.utility[i]).collect();
            let (utility_mean, utility_std) = mean_std(&per_trial);
            let abstain_rate = outcomes.iter().map(|o| o.abstain[i]).sum::<f64>() / outcomes.len() as f64;
            TradeoffPoint {
                epsilon,
                utility_mean,
                utility_std,
                trials: s.trials,
                abstain_rate,
                per_trial,
            }
        })
        .collect())
}

fn label_noise(mechanism: ScenarioMechanism, epsilon: f64) -> Result<LabelNoise, SimError> {
    Ok(match mechanism {
        ScenarioMechanism::Gnmax { delta } => LabelNoise::Gnmax(calibrate_sigma(epsilon, delta, 1.0, 1)?.sigma),
        ScenarioMechanism::RnmLaplace => LabelNoise::Laplace(1.0 / epsilon),
        ScenarioMechanism::Exponential => LabelNoise::Exponential(epsilon),
        _ => unreachable!("generation mechanisms carry no label noise"),
    })
}

fn require_classification(s: &ScenarioConfig) -> Result<(), SimError> {
    s.validate()?;
    if s.mechanism.is_generation() {
        return Err(SimError::config("mechanism", "a classification mechanism is required"));
    }
    Ok(())
}

/// Label accuracy per grid ε. Trial `r` uses sub-streams of `(root, r)`, so
/// the curve is the same for any thread count.
pub fn simulate_classification(s: &ScenarioConfig, root: &RngStream) -> Result<TradeoffCurve, SimError> {
    require_classification(s)?;
    let noises = s
        .epsilon_grid
        .iter()
        .map(|&e| label_noise(s.mechanism, e))
        .collect::<Result<Vec<_>, _>>()?;
    let points = run_trials(s, &s.epsilon_grid, |r| classification_trial(s, &noises, root, r))?;
    Ok(TradeoffCurve { points })
}

/// The ε → ∞ point: plain plurality vote on the same teachers and queries.
pub fn classification_limit_point(s: &ScenarioConfig, root: &RngStream) -> Result<TradeoffPoint, SimError> {
    require_classification(s)?;
    let mut points = run_trials(s, &[f64::INFINITY], |r| classification_trial(s, &[LabelNoise::Noiseless], root, r))?;
    Ok(points.remove(0))
}

/// Token exact-match rate (few-shot generation) or keyword recall (KSA) per grid ε.
pub fn simulate_generation(s: &ScenarioConfig, root: &RngStream) -> Result<TradeoffCurve, SimError> {
    s.validate()?;
    if !s.mechanism.is_generation() {
        return Err(SimError::config("mechanism", "a generation mechanism is required"));
    }
    let points = run_trials(s, &s.epsilon_grid, |r| generation_trial(s, root, r))?;
    Ok(TradeoffCurve { points })
}

/// Dispatches on the scenario's mechanism.
pub fn simulate(s: &ScenarioConfig, root: &RngStream) -> Result<TradeoffCurve, SimError> {
    if s.mechanism.is_generation() {
        simulate_generation(s, root)
    } else {
        simulate_classification(s, root)
    }
}

/// [`simulate`] on a dedicated pool of `threads` workers.
pub fn simulate_with_threads(s: &ScenarioConfig, root: &RngStream, threads: usize) -> Result<TradeoffCurve, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::config("threads", e.to_string()))?;
    pool.install(|| simulate(s, root))
}

/// Keyword id of a simulated keyword, if it is one.
pub fn keyword_id(word: &str) -> Option<usize> {
    word.strip_prefix('w')?.parse().ok().filter(|id| sim_keyword(*id) == word)
}
