//! Rényi-DP curves for the Gaussian and Poisson-subsampled Gaussian mechanisms.

use serde::{Deserialize, Serialize};

use super::AccountingError;

/// The default order grid: 1.25, 1.5, 1.75, every integer 2..=64, 128 and 256.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5, 1.75];
    orders.extend((2..=64).map(f64::from));
    orders.extend([128.0, 256.0]);
    orders
}

/// RDP values over a grid of Rényi orders α > 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve")]
pub struct RdpCurve {
    orders: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCurve {
    orders: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawCurve> for RdpCurve {
    type Error = AccountingError;
    fn try_from(r: RawCurve) -> Result<Self, Self::Error> {
        RdpCurve::new(r.orders, r.values)
    }
}

impl RdpCurve {
    /// Values may be `+inf` (no privacy at that order) but never negative or NaN.
    pub fn new(orders: Vec<f64>, values: Vec<f64>) -> Result<Self, AccountingError> {
        check_orders(&orders)?;
        if orders.len() != values.len() {
            return Err(AccountingError::invalid(format!(
                "curve has {} orders but {} values",
                orders.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(AccountingError::invalid(format!("RDP value {v} is not a nonnegative number")));
        }
        Ok(Self { orders, values })
    }

    pub fn zero(orders: Vec<f64>) -> Result<Self, AccountingError> {
        let values = vec![0.0; orders.len()];
        Self::new(orders, values)
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, order: f64) -> Option<f64> {
        self.orders.iter().position(|&a| a == order).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// Multiplies every value by `factor` (e.g. a step count).
    pub fn scaled(&self, factor: f64) -> RdpCurve {
        RdpCurve {
            orders: self.orders.clone(),
            values: self.values.iter().map(|v| if *v == 0.0 { 0.0 } else { v * factor }).collect(),
        }
    }
}

fn check_orders(orders: &[f64]) -> Result<(), AccountingError> {
    if let Some(a) = orders.iter().find(|a| !(**a > 1.0 && a.is_finite())) {
        return Err(AccountingError::invalid(format!("Rényi order {a} must be finite and > 1")));
    }
    if orders.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AccountingError::invalid("Rényi orders must be strictly increasing"));
    }
    Ok(())
}

/// RDP of the Gaussian mechanism with unit L2 sensitivity: `α / (2σ²)`.
pub fn rdp_gaussian(sigma: f64, orders: &[f64]) -> Result<RdpCurve, AccountingError> {
    if !(sigma > 0.0) || sigma.is_nan() {
        return Err(AccountingError::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let values = orders.iter().map(|a| a / (2.0 * sigma * sigma)).collect();
    RdpCurve::new(orders.to_vec(), values)
}

/// Parameters of a Poisson-subsampled Gaussian mechanism run for `steps` rounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsampledGaussianParams {
    pub sigma: f64,
    pub q: f64,
    pub steps: u64,
}

impl SubsampledGaussianParams {
    pub fn new(sigma: f64, q: f64, steps: u64) -> Result<Self, AccountingError> {
        let p = Self { sigma, q, steps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AccountingError> {
        if !(self.sigma > 0.0) || self.sigma.is_nan() {
            return Err(AccountingError::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(AccountingError::invalid(format!("sampling rate q must lie in (0, 1], got {}", self.q)));
        }
        if self.steps == 0 {
            return Err(AccountingError::invalid("steps must be at least 1"));
        }
        Ok(())
    }
}

/// RDP of the Poisson-subsampled Gaussian mechanism, multiplied by `steps`.
///
/// For integer α the bound is the exact binomial expansion
///
/// ```text
/// A_α = Σ_{k=0}^{α} C(α,k) (1-q)^{α-k} q^k exp((k² - k) / (2σ²))
/// ε(α) = ln(A_α) / (α - 1)
/// ```
///
/// evaluated in log space. This bound is only defined here on integer
/// orders, so fractional orders are dropped from the returned curve with a
/// logged warning. When no integer orders remain the call fails.
pub fn rdp_subsampled_gaussian(params: SubsampledGaussianParams, orders: &[f64]) -> Result<RdpCurve, AccountingError> {
    params.validate()?;
    let integer: Vec<f64> = orders.iter().copied().filter(|a| a.fract() == 0.0).collect();
    if integer.len() != orders.len() {
        log::warn!(
            "subsampled Gaussian RDP is evaluated on integer orders only; dropping {} fractional orders",
            orders.len() - integer.len()
        );
    }
    if integer.is_empty() {
        return Err(AccountingError::invalid("no integer Rényi orders to evaluate"));
    }
    let values = integer
        .iter()
        .map(|&a| log_a_integer(params.q, params.sigma, a as u64) / (a - 1.0) * params.steps as f64)
        .collect();
    RdpCurve::new(integer, values)
}

/// `ln A_α` for integer α via a log-sum-exp over the binomial terms.
fn log_a_integer(q: f64, sigma: f64, alpha: u64) -> f64 {
    if q == 1.0 {
        let a = alpha as f64;
        return a * (a - 1.0) / (2.0 * sigma * sigma);
    }
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let mut ln_binom = 0.0f64;
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    for k in 0..=alpha {
        if k > 0 {
            ln_binom += ((alpha - k + 1) as f64).ln() - (k as f64).ln();
        }
        let kf = k as f64;
        terms.push(ln_binom + (alpha - k) as f64 * ln_1mq + kf * ln_q + (kf * kf - kf) / (2.0 * sigma * sigma));
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    // A_α ≥ 1; clamp away rounding below zero.
    (max + sum.ln()).max(0.0)
}

/// Pointwise sum of curves sharing one order grid.
pub fn compose(curves: &[RdpCurve]) -> Result<RdpCurve, AccountingError> {
    let first = curves
        .first()
        .ok_or_else(|| AccountingError::invalid("nothing to compose"))?;
    let mut values = first.values.clone();
    for c in &curves[1..] {
        if c.orders != first.orders {
            return Err(AccountingError::invalid("cannot compose curves over different order grids"));
        }
        for (v, w) in values.iter_mut().zip(&c.values) {
            *v += w;
        }
    }
    RdpCurve::new(first.orders.clone(), values)
}

/// An (ε, δ) guarantee obtained from an RDP curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonAtDelta {
    pub epsilon: f64,
    pub delta: f64,
    /// The order that attained the minimum.
    pub alpha: f64,
}

/// `ε = min_α value(α) + ln(1/δ)/(α - 1)`.
pub fn to_eps_delta(curve: &RdpCurve, delta: f64) -> Result<EpsilonAtDelta, AccountingError> {
    if curve.is_empty() {
        return Err(AccountingError::invalid("empty RDP curve"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountingError::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let log_inv_delta = (1.0 / delta).ln();
    let mut best = EpsilonAtDelta {
        epsilon: f64::INFINITY,
        delta,
        alpha: curve.orders[curve.orders.len() - 1],
    };
    for (&a, &v) in curve.orders.iter().zip(&curve.values) {
        let eps = v + log_inv_delta / (a - 1.0);
        if eps < best.epsilon {
            best.epsilon = eps;
            best.alpha = a;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_grid_shape() {
        let o = default_orders();
        assert_eq!(o.len(), 3 + 63 + 2);
        assert_eq!(o[0], 1.25);
        assert_eq!(*o.last().unwrap(), 256.0);
        assert!(RdpCurve::zero(o).is_ok());
    }

    #[test]
    fn curve_invariants() {
        assert!(RdpCurve::new(vec![2.0, 2.0], vec![0.0, 0.0]).is_err());
        assert!(RdpCurve::new(vec![1.0], vec![0.0]).is_err());
        assert!(RdpCurve::new(vec![2.0], vec![-1.0]).is_err());
        assert!(RdpCurve::new(vec![2.0, 3.0], vec![0.0]).is_err());
        assert!(serde_json::from_str::<RdpCurve>(r#"{"orders":[3,2],"values":[0,0]}"#).is_err());
    }

    #[test]
    fn gaussian_closed_form() {
        let c = rdp_gaussian(1.0, &[2.0]).unwrap();
        assert_relative_eq!(c.values()[0], 1.0);
        let c = rdp_gaussian(0.5, &[4.0]).unwrap();
        assert_relative_eq!(c.values()[0], 8.0);
        let c = rdp_gaussian(1e9, &default_orders()).unwrap();
        assert!(c.values().iter().all(|&v| v < 1e-15));
        assert!(rdp_gaussian(0.0, &[2.0]).is_err());
    }

    #[test]
    fn full_sampling_matches_gaussian() {
        let orders: Vec<f64> = (2..=64).map(f64::from).collect();
        let p = SubsampledGaussianParams::new(1.3, 1.0, 7).unwrap();
        let sub = rdp_subsampled_gaussian(p, &orders).unwrap();
        let g = rdp_gaussian(1.3, &orders).unwrap().scaled(7.0);
        for (a, b) in sub.values().iter().zip(g.values()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
    }

    #[test]
    fn full_sampling_general_path_matches() {
        // The binomial sum with q just below 1 converges to the unsampled value.
        let p = SubsampledGaussianParams::new(2.0, 1.0 - 1e-12, 1).unwrap();
        let sub = rdp_subsampled_gaussian(p, &[2.0, 10.0, 32.0]).unwrap();
        let g = rdp_gaussian(2.0, &[2.0, 10.0, 32.0]).unwrap();
        for (a, b) in sub.values().iter().zip(g.values()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-6);
        }
    }

    #[test]
    fn alpha_two_closed_form() {
        // A_2 = (1-q)^2 + 2q(1-q) + q^2 e^{1/σ²} = 1 + q²(e^{1/σ²} - 1)
        let q = 0.01;
        let p = SubsampledGaussianParams::new(1.0, q, 1).unwrap();
        let v = rdp_subsampled_gaussian(p, &[2.0]).unwrap().values()[0];
        let expected = (1.0 + q * q * (1f64.exp() - 1.0)).ln();
        assert_relative_eq!(v, expected, max_relative = 1e-12);
        assert!(v <= rdp_gaussian(1.0, &[2.0]).unwrap().values()[0]);
    }

    #[test]
    fn fractional_orders_dropped() {
        let p = SubsampledGaussianParams::new(1.0, 0.1, 1).unwrap();
        let c = rdp_subsampled_gaussian(p, &default_orders()).unwrap();
        assert_eq!(c.orders()[0], 2.0);
        assert_eq!(c.len(), 65);
        assert!(rdp_subsampled_gaussian(p, &[1.5]).is_err());
    }

    #[test]
    fn compose_examples() {
        let o = default_orders();
        let c = rdp_gaussian(1.0, &o).unwrap();
        assert_eq!(compose(std::slice::from_ref(&c)).unwrap(), c);
        assert_eq!(compose(&[c.clone(), RdpCurve::zero(o.clone()).unwrap()]).unwrap(), c);
        let two = compose(&[c.clone(), c.clone()]).unwrap();
        assert_relative_eq!(two.value_at(2.0).unwrap(), 2.0);
        let other = rdp_gaussian(1.0, &[2.0, 3.0]).unwrap();
        assert!(compose(&[c, other]).is_err());
        assert!(compose(&[]).is_err());
    }

    #[test]
    fn zero_curve_conversion() {
        let o = default_orders();
        let e = to_eps_delta(&RdpCurve::zero(o).unwrap(), 1e-5).unwrap();
        assert_relative_eq!(e.epsilon, (1e5f64).ln() / 255.0, max_relative = 1e-12);
        assert_eq!(e.alpha, 256.0);
    }

    #[test]
    fn conversion_errors() {
        let c = rdp_gaussian(1.0, &[2.0]).unwrap();
        assert!(to_eps_delta(&c, 0.0).is_err());
        assert!(to_eps_delta(&c, 1.0).is_err());
        let empty = RdpCurve::new(vec![], vec![]).unwrap();
        assert!(to_eps_delta(&empty, 1e-5).is_err());
    }
}
