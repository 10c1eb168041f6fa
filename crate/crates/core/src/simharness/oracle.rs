//! Exact output distributions of selection mechanisms on small domains,
//! used as test oracles.
//!
//! The exponential mechanism is evaluated as a softmax. Noisy-max variants
//! are evaluated as `P(i) = ∫ f_i(x) Π_{j≠i} F_j(x) dx` with composite
//! 20-point Gauss–Legendre quadrature on panels no wider than half the
//! noise scale, split at every centre so each panel's integrand is smooth.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::SimError;
use crate::mechanisms::VoteHistogram;

/// Largest domain the oracles accept.
pub const MAX_ORACLE_DOMAIN: usize = 6;
/// Largest count [`dp_ratio_audit`] accepts.
pub const MAX_AUDIT_COUNT: u64 = 20;

/// A mechanism whose output distribution the oracle can compute.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismSpec {
    Exponential { sensitivity: f64, epsilon: f64 },
    /// Argmax of scores plus Gumbel noise of scale `2Δ/ε`, integrated directly.
    GumbelTop1 { sensitivity: f64, epsilon: f64 },
    RnmLaplace { scale: f64 },
    Gnmax { sigma: f64 },
}

impl MechanismSpec {
    /// Report-noisy-max with Laplace scale `1/ε`.
    pub fn rnm_laplace_for_epsilon(epsilon: f64) -> Self {
        MechanismSpec::RnmLaplace { scale: 1.0 / epsilon }
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        let good = match *self {
            MechanismSpec::Exponential { sensitivity, epsilon } | MechanismSpec::GumbelTop1 { sensitivity, epsilon } => {
                ok(sensitivity) && ok(epsilon)
            }
            MechanismSpec::RnmLaplace { scale } => ok(scale),
            MechanismSpec::Gnmax { sigma } => ok(sigma),
        };
        if good {
            Ok(())
        } else {
            Err(SimError::config("mechanism", format!("parameters of {self:?} must be positive and finite")))
        }
    }
}

const GL_POINTS: usize = 20;

fn gauss_legendre() -> ([f64; GL_POINTS], [f64; GL_POINTS]) {
    let n = GL_POINTS;
    let mut nodes = [0.0; GL_POINTS];
    let mut weights = [0.0; GL_POINTS];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `∫ f` over `[lo, hi]`, split at `breaks` and into panels of width ≤ `max_width`.
fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, breaks: &[f64], max_width: f64) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let mut edges: Vec<f64> = std::iter::once(lo)
        .chain(breaks.iter().copied().filter(|b| *b > lo && *b < hi))
        .chain(std::iter::once(hi))
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let panels = (((b - a) / max_width).ceil() as usize).clamp(1, 200_000);
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let pa = a + p as f64 * h;
            let mid = pa + 0.5 * h;
            let half = 0.5 * h;
            let s: f64 = nodes.iter().zip(&weights).map(|(x, wt)| wt * f(mid + half * x)).sum();
            total += s * half;
        }
    }
    total
}

fn laplace_pdf(x: f64, c: f64, b: f64) -> f64 {
    (-(x - c).abs() / b).exp() / (2.0 * b)
}

fn laplace_cdf(x: f64, c: f64, b: f64) -> f64 {
    if x < c {
        0.5 * ((x - c) / b).exp()
    } else {
        1.0 - 0.5 * (-(x - c) / b).exp()
    }
}

fn normal_pdf(x: f64, c: f64, s: f64) -> f64 {
    let z = (x - c) / s;
    (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

fn normal_cdf(x: f64, c: f64, s: f64) -> f64 {
    0.5 * erfc(-(x - c) / (s * std::f64::consts::SQRT_2))
}

fn gumbel_pdf(x: f64, c: f64, beta: f64) -> f64 {
    let z = (x - c) / beta;
    (-z - (-z).exp()).exp() / beta
}

fn gumbel_cdf(x: f64, c: f64, beta: f64) -> f64 {
    (-(-(x - c) / beta).exp()).exp()
}

fn noisy_max_distribution(
    centres: &[f64],
    pdf: impl Fn(f64, f64) -> f64,
    cdf: impl Fn(f64, f64) -> f64,
    lo: f64,
    hi: f64,
    max_width: f64,
) -> Vec<f64> {
    (0..centres.len())
        .map(|i| {
            let integrand = |x: f64| {
                let mut v = pdf(x, centres[i]);
                for (j, &c) in centres.iter().enumerate() {
                    if j != i {
                        v *= cdf(x, c);
                    }
                }
                v
            };
            integrate(integrand, lo, hi, centres, max_width)
        })
        .collect()
}

/// Exact output distribution of `spec` applied to `values` (scores or counts).
pub fn exact_mechanism_distribution(spec: &MechanismSpec, values: &[f64]) -> Result<Vec<f64>, SimError> {
    spec.validate()?;
    if values.is_empty() || values.len() > MAX_ORACLE_DOMAIN {
        return Err(SimError::DomainTooLarge {
            size: values.len(),
            max: MAX_ORACLE_DOMAIN,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SimError::config("values", "values must be finite"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let out = match *spec {
        MechanismSpec::Exponential { sensitivity, epsilon } => {
            let w: Vec<f64> = values.iter().map(|q| (epsilon * (q - max) / (2.0 * sensitivity)).exp()).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|x| x / z).collect()
        }
        MechanismSpec::GumbelTop1 { sensitivity, epsilon } => {
            let beta = 2.0 * sensitivity / epsilon;
            noisy_max_distribution(
                values,
                |x, c| gumbel_pdf(x, c, beta),
                |x, c| gumbel_cdf(x, c, beta),
                min - 8.0 * beta,
                max + 60.0 * beta,
                beta / 4.0,
            )
        }
        MechanismSpec::RnmLaplace { scale } => noisy_max_distribution(
            values,
            |x, c| laplace_pdf(x, c, scale),
            |x, c| laplace_cdf(x, c, scale),
            min - 60.0 * scale,
            max + 60.0 * scale,
            scale / 2.0,
        ),
        MechanismSpec::Gnmax { sigma } => noisy_max_distribution(
            values,
            |x, c| normal_pdf(x, c, sigma),
            |x, c| normal_cdf(x, c, sigma),
            min - 40.0 * sigma,
            max + 40.0 * sigma,
            sigma / 2.0,
        ),
    };
    Ok(out)
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical frequencies of `samples` over `0..size`.
pub fn empirical_distribution(samples: &[usize], size: usize) -> Vec<f64> {
    let mut c = vec![0.0; size];
    for &s in samples {
        c[s] += 1.0;
    }
    let n = samples.len().max(1) as f64;
    c.into_iter().map(|x| x / n).collect()
}

/// Worst privacy loss found by [`dp_ratio_audit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub max_log_ratio: f64,
    pub epsilon: f64,
    pub passed: bool,
    /// Candidate that received the extra vote in the worst neighbour.
    pub worst_neighbor: usize,
    pub worst_outcome: usize,
}

/// Slack allowed above ε for numerical error.
pub const AUDIT_SLACK: f64 = 1e-9;

/// Exhaustive privacy-loss audit over every neighbour `D + one vote`.
///
/// Returns the largest `|ln P_D(o) - ln P_D'(o)|`; the mechanism passes if it
/// stays within `epsilon + 1e-9`.
pub fn dp_ratio_audit(spec: &MechanismSpec, hist: &VoteHistogram, epsilon: f64) -> Result<AuditReport, SimError> {
    if hist.len() > MAX_ORACLE_DOMAIN {
        return Err(SimError::DomainTooLarge {
            size: hist.len(),
            max: MAX_ORACLE_DOMAIN,
        });
    }
    if let Some(c) = hist.counts().iter().find(|c| **c > MAX_AUDIT_COUNT) {
        return Err(SimError::config("counts", format!("audit counts must be at most {MAX_AUDIT_COUNT}, got {c}")));
    }
    let base = exact_mechanism_distribution(spec, &hist.as_f64())?;
    let mut report = AuditReport {
        max_log_ratio: 0.0,
        epsilon,
        passed: true,
        worst_neighbor: 0,
        worst_outcome: 0,
    };
    for j in 0..hist.len() {
        let neighbor = hist.with_added_vote(j).map_err(|e| SimError::config("counts", e.to_string()))?;
        let dist = exact_mechanism_distribution(spec, &neighbor.as_f64())?;
        for (o, (p, q)) in base.iter().zip(&dist).enumerate() {
            let r = match (*p > 0.0, *q > 0.0) {
                (true, true) => (p.ln() - q.ln()).abs(),
                (false, false) => 0.0,
                _ => f64::INFINITY,
            };
            if r > report.max_log_ratio {
                report.max_log_ratio = r;
                report.worst_neighbor = j;
                report.worst_outcome = o;
            }
        }
    }
    report.passed = report.max_log_ratio <= epsilon + AUDIT_SLACK;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        // 20-point rule is exact through degree 39.
        let v = integrate(|x| x.powi(12), -1.0, 1.0, &[], 10.0);
        assert_relative_eq!(v, 2.0 / 13.0, max_relative = 1e-13);
        let v = integrate(|x| (-x).exp(), 0.0, 50.0, &[], 0.5);
        assert_relative_eq!(v, 1.0 - (-50f64).exp(), max_relative = 1e-13);
    }

    #[test]
    fn em_closed_forms() {
        let spec = MechanismSpec::Exponential {
            sensitivity: 1.0,
            epsilon: 0.7,
        };
        let p = exact_mechanism_distribution(&spec, &[4.0, 4.0, 4.0]).unwrap();
        for x in p {
            assert_relative_eq!(x, 1.0 / 3.0, max_relative = 1e-14);
        }
        let spec = MechanismSpec::Exponential {
            sensitivity: 1.0,
            epsilon: 2.0 * 3f64.ln(),
        };
        let p = exact_mechanism_distribution(&spec, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(p[0], 0.75, max_relative = 1e-14);
        assert_relative_eq!(p[1], 0.25, max_relative = 1e-14);
    }

    #[test]
    fn symmetric_noisy_max() {
        for spec in [MechanismSpec::RnmLaplace { scale: 0.8 }, MechanismSpec::Gnmax { sigma: 2.0 }] {
            let p = exact_mechanism_distribution(&spec, &[5.0, 5.0]).unwrap();
            assert!((p[0] - 0.5).abs() < 1e-10 && (p[1] - 0.5).abs() < 1e-10, "{spec:?} {p:?}");
        }
    }

    #[test]
    fn two_candidate_laplace_closed_form() {
        // P(c0 + L0 > c1 + L1) with gap g, L0 - L1 ~ difference of Laplaces:
        // P(diff < g) = 1 - (2 + g/b) e^{-g/b} / 4 for g ≥ 0.
        let (b, g) = (0.7, 1.3);
        let p = exact_mechanism_distribution(&MechanismSpec::RnmLaplace { scale: b }, &[g, 0.0]).unwrap();
        let expected = 1.0 - (2.0 + g / b) * (-g / b).exp() / 4.0;
        assert_relative_eq!(p[0], expected, max_relative = 1e-12);
    }

    #[test]
    fn two_candidate_gaussian_closed_form() {
        // P(N(g, 2σ²) > 0) = Φ(g / (σ√2))
        let (s, g) = (1.5, 2.0);
        let p = exact_mechanism_distribution(&MechanismSpec::Gnmax { sigma: s }, &[g, 0.0]).unwrap();
        let expected = normal_cdf(g / (s * std::f64::consts::SQRT_2), 0.0, 1.0);
        assert_relative_eq!(p[0], expected, max_relative = 1e-9);
    }

    #[test]
    fn gumbel_integral_matches_softmax() {
        let scores = [1.0, 0.0, 2.5];
        let em = exact_mechanism_distribution(&MechanismSpec::Exponential { sensitivity: 1.0, epsilon: 1.3 }, &scores).unwrap();
        let gb = exact_mechanism_distribution(&MechanismSpec::GumbelTop1 { sensitivity: 1.0, epsilon: 1.3 }, &scores).unwrap();
        for (a, b) in em.iter().zip(&gb) {
            assert_relative_eq!(*a, *b, max_relative = 1e-11);
        }
    }

    #[test]
    fn distributions_sum_to_one() {
        let vals = [3.0, 0.0, 7.0, 7.0, 1.0, 20.0];
        for spec in [
            MechanismSpec::RnmLaplace { scale: 0.25 },
            MechanismSpec::RnmLaplace { scale: 40.0 },
            MechanismSpec::Gnmax { sigma: 0.3 },
            MechanismSpec::Gnmax { sigma: 30.0 },
            MechanismSpec::GumbelTop1 { sensitivity: 1.0, epsilon: 5.0 },
        ] {
            let p = exact_mechanism_distribution(&spec, &vals).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{spec:?}");
        }
    }

    #[test]
    fn refuses_large_domains() {
        let spec = MechanismSpec::Gnmax { sigma: 1.0 };
        assert!(matches!(exact_mechanism_distribution(&spec, &[0.0; 7]), Err(SimError::DomainTooLarge { .. })));
    }

    #[test]
    fn audits() {
        let h = VoteHistogram::from_counts(vec![3, 0, 5]).unwrap();
        let em = dp_ratio_audit(&MechanismSpec::Exponential { sensitivity: 1.0, epsilon: 1.0 }, &h, 1.0).unwrap();
        assert!(em.passed && em.max_log_ratio <= 1.0 + AUDIT_SLACK, "{em:?}");
        let rnm = dp_ratio_audit(&MechanismSpec::rnm_laplace_for_epsilon(2.0), &h, 2.0).unwrap();
        assert!(rnm.passed, "{rnm:?}");
        let flat = dp_ratio_audit(&MechanismSpec::rnm_laplace_for_epsilon(1e-9), &h, 1e-9).unwrap();
        assert!(flat.max_log_ratio < 1e-6, "{flat:?}");
        // Too little noise for the declared epsilon fails.
        let bad = dp_ratio_audit(&MechanismSpec::rnm_laplace_for_epsilon(4.0), &h, 1.0).unwrap();
        assert!(!bad.passed);
        let big = VoteHistogram::from_counts(vec![21, 0]).unwrap();
        assert!(dp_ratio_audit(&MechanismSpec::rnm_laplace_for_epsilon(1.0), &big, 1.0).is_err());
    }
}

/// Exact accuracy of a noiseless plurality vote (ties to the lowest label)
/// with a uniformly random true label, by enumerating every vote histogram.
pub fn majority_vote_accuracy(model: &super::SimTeacherModel, n_teachers: usize) -> Result<f64, SimError> {
    model.validate()?;
    let k = model.domain_size;
    if k > MAX_ORACLE_DOMAIN {
        return Err(SimError::DomainTooLarge {
            size: k,
            max: MAX_ORACLE_DOMAIN,
        });
    }
    if n_teachers == 0 {
        return Err(SimError::config("n_teachers", "must be positive"));
    }
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n_teachers).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();

    fn walk(
        i: usize,
        left: usize,
        counts: &mut Vec<usize>,
        row: &[f64],
        ln_fact: &[f64],
        truth: usize,
        total: &mut f64,
    ) {
        if i + 1 == row.len() {
            counts.push(left);
            let mut lp = ln_fact[ln_fact.len() - 1];
            let mut possible = true;
            for (c, p) in counts.iter().zip(row) {
                if *c > 0 {
                    if *p == 0.0 {
                        possible = false;
                        break;
                    }
                    lp += *c as f64 * p.ln() - ln_fact[*c];
                }
            }
            let best = counts.iter().max().copied().unwrap_or(0);
            let winner = counts.iter().position(|c| *c == best).unwrap_or(0);
            if possible && winner == truth {
                *total += lp.exp();
            }
            counts.pop();
            return;
        }
        for c in 0..=left {
            counts.push(c);
            walk(i + 1, left - c, counts, row, ln_fact, truth, total);
            counts.pop();
        }
    }

    let mut acc = 0.0;
    for truth in 0..k {
        let row = model.answer_distribution(truth);
        let mut total = 0.0;
        walk(0, n_teachers, &mut Vec::with_capacity(k), &row, &ln_fact, truth, &mut total);
        acc += total / k as f64;
    }
    Ok(acc)
}
