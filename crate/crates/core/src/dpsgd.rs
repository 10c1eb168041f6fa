//! A toy DPSGD trainer for convex models (logistic and least-squares
//! regression). It exercises per-example clipping, Gaussian noise and the
//! subsampled-Gaussian accountant end to end.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{
    default_orders, dpsgd_curve, to_eps_delta, AccountingError, DeltaConvention, LedgerEntry, PrivacyLedger, RdpCurve,
    SubsampledGaussianParams,
};
use crate::rng::RngStream;

#[derive(Debug, Error)]
pub enum DpSgdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: weights have {weights} entries, example has {features}")]
    DimensionMismatch { weights: usize, features: usize },
    #[error("training diverged at step {step}: weights are no longer finite")]
    Divergence { step: u64 },
    #[error(transparent)]
    Accounting(#[from] AccountingError),
    #[error("dataset: {0}")]
    Csv(#[from] csv::Error),
}

/// Row-major feature matrix with one target per row.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataset {
    n: usize,
    d: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl ToyDataset {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, DpSgdError> {
        if rows.is_empty() {
            return Err(DpSgdError::InvalidInput("dataset needs at least one example".into()));
        }
        if rows.len() != targets.len() {
            return Err(DpSgdError::InvalidInput(format!("{} rows but {} targets", rows.len(), targets.len())));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(DpSgdError::InvalidInput("examples need at least one feature".into()));
        }
        let mut features = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(DpSgdError::InvalidInput(format!("row {i} has {} features, expected {d}", r.len())));
            }
            features.extend_from_slice(r);
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(DpSgdError::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Self {
            n: rows.len(),
            d,
            features,
            targets,
        })
    }

    /// Reads CSV with a header row; the last column is the target.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, DpSgdError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| DpSgdError::InvalidInput(format!("row {}: {e}", i + 1)))?;
            let (target, feats) = vals
                .split_last()
                .ok_or_else(|| DpSgdError::InvalidInput(format!("row {} is empty", i + 1)))?;
            rows.push(feats.to_vec());
            targets.push(*target);
        }
        Self::new(rows, targets)
    }

    /// Writes a header `x0,..,x{d-1},y` and one row per example.
    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DpSgdError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features(i).iter().map(f64::to_string).collect();
            rec.push(self.target(i).to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Cross-entropy on `sigmoid(w·x)` with labels in {0, 1}.
    Logistic,
    /// `½ (w·x - y)²`.
    Squared,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_dims(weights: &[f64], x: &[f64]) -> Result<(), DpSgdError> {
    if weights.len() == x.len() {
        Ok(())
    } else {
        Err(DpSgdError::DimensionMismatch {
            weights: weights.len(),
            features: x.len(),
        })
    }
}

/// Loss of one example.
pub fn per_sample_loss(loss: Loss, weights: &[f64], x: &[f64], y: f64) -> Result<f64, DpSgdError> {
    check_dims(weights, x)?;
    let z = dot(weights, x);
    Ok(match loss {
        // log(1 + e^z) - y z, written to avoid overflow
        Loss::Logistic => z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z,
        Loss::Squared => 0.5 * (z - y).powi(2),
    })
}

/// Analytic gradient of [`per_sample_loss`] with respect to the weights.
pub fn per_sample_gradient(loss: Loss, weights: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>, DpSgdError> {
    check_dims(weights, x)?;
    let z = dot(weights, x);
    let r = match loss {
        Loss::Logistic => sigmoid(z) - y,
        Loss::Squared => z - y,
    };
    Ok(x.iter().map(|xi| r * xi).collect())
}

pub fn l2_norm(v: &[f64]) -> f64 {
    let plain = v.iter().map(|x| x * x).sum::<f64>();
    if plain.is_normal() || plain.is_nan() || v.iter().all(|x| *x == 0.0) {
        return plain.sqrt();
    }
    // Squares overflowed or underflowed: rescale by the largest entry.
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !m.is_finite() {
        return m;
    }
    m * v.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
}

/// Rescales `gradient` to L2 norm at most `clip_norm`.
pub fn clip(gradient: &[f64], clip_norm: f64) -> Vec<f64> {
    let norm = l2_norm(gradient);
    if norm <= clip_norm || norm.is_nan() {
        return gradient.to_vec();
    }
    let mut s = clip_norm / norm;
    loop {
        let out: Vec<f64> = gradient.iter().map(|g| g * s).collect();
        // Rounding can leave the rescaled norm an ulp above the bound.
        if l2_norm(&out) <= clip_norm {
            return out;
        }
        s = s.next_down();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSgdConfig {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub sampling_rate: f64,
    pub steps: u64,
    pub learning_rate: f64,
    /// δ for the reported ε; `None` means 1/n.
    #[serde(default)]
    pub delta: Option<DeltaConvention>,
    pub loss: Loss,
}

impl DpSgdConfig {
    pub fn validate(&self) -> Result<(), DpSgdError> {
        let bad = |field: &str, v: f64| DpSgdError::InvalidInput(format!("{field} is out of range: {v}"));
        if !(self.clip_norm > 0.0) || self.clip_norm.is_nan() {
            return Err(bad("clip_norm", self.clip_norm));
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(bad("noise_multiplier", self.noise_multiplier));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(bad("sampling_rate", self.sampling_rate));
        }
        if self.steps == 0 {
            return Err(DpSgdError::InvalidInput("steps must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(bad("learning_rate", self.learning_rate));
        }
        if let Some(d) = self.delta {
            d.resolve()?;
        }
        Ok(())
    }

    /// The RDP charge of a single step. Without noise every order is infinite.
    pub fn step_curve(&self) -> Result<RdpCurve, DpSgdError> {
        let orders = default_orders();
        if self.noise_multiplier == 0.0 {
            let orders: Vec<f64> = if self.sampling_rate == 1.0 {
                orders
            } else {
                orders.into_iter().filter(|a| a.fract() == 0.0).collect()
            };
            let inf = vec![f64::INFINITY; orders.len()];
            return Ok(RdpCurve::new(orders, inf)?);
        }
        let p = SubsampledGaussianParams::new(self.noise_multiplier, self.sampling_rate, 1)?;
        Ok(dpsgd_curve(p, &orders)?)
    }

    fn charge(&self, curve: RdpCurve) -> LedgerEntry {
        LedgerEntry::rdp("subsampled_gaussian", curve)
            .with_meta("sigma", self.noise_multiplier)
            .with_meta("q", self.sampling_rate)
    }
}

/// One noisy update.
#[derive(Clone, Debug, PartialEq)]
pub struct DpSgdStep {
    pub weights: Vec<f64>,
    pub charge: LedgerEntry,
    pub batch_size: usize,
    /// Largest per-example norm after clipping; never above the clip norm.
    pub max_clipped_norm: f64,
}

fn step_with_curve(
    weights: &[f64],
    data: &ToyDataset,
    config: &DpSgdConfig,
    curve: RdpCurve,
    rng: &mut RngStream,
) -> Result<DpSgdStep, DpSgdError> {
    if weights.len() != data.dim() {
        return Err(DpSgdError::DimensionMismatch {
            weights: weights.len(),
            features: data.dim(),
        });
    }
    let c = config.clip_norm;
    let mut sum = vec![0.0; weights.len()];
    let mut batch_size = 0;
    let mut max_clipped_norm: f64 = 0.0;
    for i in 0..data.len() {
        // Poisson sampling; an empty batch leaves a noise-only update.
        if rng.unit() >= config.sampling_rate {
            continue;
        }
        batch_size += 1;
        let g = clip(&per_sample_gradient(config.loss, weights, data.features(i), data.target(i))?, c);
        let norm = l2_norm(&g);
        assert!(norm <= c || norm.is_nan(), "clipped norm {norm} exceeds {c}");
        max_clipped_norm = max_clipped_norm.max(norm);
        for (s, gi) in sum.iter_mut().zip(&g) {
            *s += gi;
        }
    }
    let noise_sd = config.noise_multiplier * c;
    if noise_sd > 0.0 {
        for s in sum.iter_mut() {
            *s += noise_sd * rng.standard_normal();
        }
    }
    // Normalised by the expected batch size q·n.
    let denom = config.sampling_rate * data.len() as f64;
    let next = weights
        .iter()
        .zip(&sum)
        .map(|(w, s)| w - config.learning_rate * (s / denom))
        .collect();
    Ok(DpSgdStep {
        weights: next,
        charge: config.charge(curve),
        batch_size,
        max_clipped_norm,
    })
}

/// A single DPSGD step: Poisson-sample at rate q, sum clipped per-example
/// gradients, add `N(0, (σC)²)` per coordinate, divide by `q·n`, descend.
pub fn dpsgd_step(weights: &[f64], data: &ToyDataset, config: &DpSgdConfig, rng: &mut RngStream) -> Result<DpSgdStep, DpSgdError> {
    config.validate()?;
    step_with_curve(weights, data, config, config.step_curve()?, rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutput {
    pub weights: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub ledger: PrivacyLedger,
}

/// Trains from zero weights for `config.steps` steps.
pub fn train(data: &ToyDataset, config: &DpSgdConfig, rng: &mut RngStream) -> Result<TrainOutput, DpSgdError> {
    train_with(data, config, rng, |_, _| {})
}

/// [`train`] with a callback receiving `(step, weights after step)`.
///
/// Step `t` draws from `rng.derive(t)`.
pub fn train_with<F: FnMut(u64, &[f64])>(
    data: &ToyDataset,
    config: &DpSgdConfig,
    rng: &mut RngStream,
    mut observer: F,
) -> Result<TrainOutput, DpSgdError> {
    config.validate()?;
    let delta = config.delta.unwrap_or(DeltaConvention::OneOverN(data.len() as u64)).resolve()?;
    let curve = config.step_curve()?;
    let mut weights = vec![0.0; data.dim()];
    let mut ledger = PrivacyLedger::new();
    for t in 0..config.steps {
        let mut step_rng = rng.derive(t);
        let step = step_with_curve(&weights, data, config, curve.clone(), &mut step_rng)?;
        if step.weights.iter().any(|w| !w.is_finite()) {
            return Err(DpSgdError::Divergence { step: t });
        }
        weights = step.weights;
        ledger.push(step.charge.with_meta("step", t));
        observer(t, &weights);
    }
    let total = ledger.rdp_total()?.expect("at least one step was charged");
    let conv = to_eps_delta(&total, delta)?;
    Ok(TrainOutput {
        weights,
        epsilon: conv.epsilon,
        delta,
        alpha: conv.alpha,
        ledger,
    })
}

/// Fraction of examples whose thresholded logit `w·x > 0` matches a {0, 1} label.
pub fn accuracy(weights: &[f64], data: &ToyDataset) -> f64 {
    let correct = (0..data.len())
        .filter(|&i| {
            let pred = if dot(weights, data.features(i)) > 0.0 { 1.0 } else { 0.0 };
            pred == data.target(i)
        })
        .count();
    correct as f64 / data.len() as f64
}

/// Two Gaussian blobs in the plane plus a constant bias feature, labeled
/// by side of the line `x₁ + x₂ = 0` with a margin.
pub fn separable_blobs(n: usize, rng: &mut RngStream) -> ToyDataset {
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    while rows.len() < n {
        let label = (rows.len() % 2) as f64;
        let centre = if label == 1.0 { 1.5 } else { -1.5 };
        let x1 = centre + 0.6 * rng.standard_normal();
        let x2 = centre + 0.6 * rng.standard_normal();
        let margin = (x1 + x2) * if label == 1.0 { 1.0 } else { -1.0 };
        if margin < 0.5 {
            continue;
        }
        rows.push(vec![x1, x2, 1.0]);
        targets.push(label);
    }
    ToyDataset::new(rows, targets).expect("generated data is well formed")
}
