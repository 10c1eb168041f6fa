use serde::{Deserialize, Serialize};

use super::rdp::{default_orders, rdp_gaussian, rdp_subsampled_gaussian, to_eps_delta, EpsilonAtDelta, RdpCurve, SubsampledGaussianParams};
use super::AccountingError;

const SIGMA_LOWER: f64 = 0.3;
const SIGMA_UPPER: f64 = 100.0;
const SIGMA_TOLERANCE: f64 = 1e-4;
const MAX_BISECTIONS: usize = 200;

/// Total RDP of `steps` rounds of the subsampled Gaussian.
///
/// At `q = 1` there is no subsampling and the closed-form Gaussian curve is
/// used on the full grid, fractional orders included.
pub fn dpsgd_curve(params: SubsampledGaussianParams, orders: &[f64]) -> Result<RdpCurve, AccountingError> {
    params.validate()?;
    if params.q == 1.0 {
        Ok(rdp_gaussian(params.sigma, orders)?.scaled(params.steps as f64))
    } else {
        rdp_subsampled_gaussian(params, orders)
    }
}

/// (ε, δ) of `steps` rounds of the subsampled Gaussian on the default grid.
pub fn dpsgd_epsilon(params: SubsampledGaussianParams, delta: f64) -> Result<EpsilonAtDelta, AccountingError> {
    to_eps_delta(&dpsgd_curve(params, &default_orders())?, delta)
}

/// Outcome of [`calibrate_sigma`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub q: f64,
    pub steps: u64,
}

/// Smallest noise multiplier in `[0.3, 100]` whose accountant ε lands in
/// `[0.99·target, target]`, found by bisection to a σ tolerance of 1e-4.
pub fn calibrate_sigma(target_eps: f64, delta: f64, q: f64, steps: u64) -> Result<Calibration, AccountingError> {
    calibrate_sigma_with_orders(target_eps, delta, q, steps, &default_orders())
}

pub fn calibrate_sigma_with_orders(
    target_eps: f64,
    delta: f64,
    q: f64,
    steps: u64,
    orders: &[f64],
) -> Result<Calibration, AccountingError> {
    if !(target_eps > 0.0 && target_eps.is_finite()) {
        return Err(AccountingError::invalid(format!("target epsilon must be positive, got {target_eps}")));
    }
    let eps_at = |sigma: f64| -> Result<EpsilonAtDelta, AccountingError> {
        let params = SubsampledGaussianParams::new(sigma, q, steps)?;
        to_eps_delta(&dpsgd_curve(params, orders)?, delta)
    };
    let floor = 0.99 * target_eps;
    let accept = |sigma: f64, e: EpsilonAtDelta| Calibration {
        sigma,
        epsilon: e.epsilon,
        delta,
        alpha: e.alpha,
        q,
        steps,
    };

    let at_lower = eps_at(SIGMA_LOWER)?;
    if at_lower.epsilon <= target_eps {
        if at_lower.epsilon >= floor {
            return Ok(accept(SIGMA_LOWER, at_lower));
        }
        return Err(AccountingError::Calibration(format!(
            "target epsilon {target_eps} is looser than sigma = {SIGMA_LOWER} already gives ({})",
            at_lower.epsilon
        )));
    }
    let at_upper = eps_at(SIGMA_UPPER)?;
    if at_upper.epsilon > target_eps {
        return Err(AccountingError::Calibration(format!(
            "target epsilon {target_eps} unreachable: sigma = {SIGMA_UPPER} still gives {}",
            at_upper.epsilon
        )));
    }

    // Invariant: eps(lo) > target >= eps(hi).
    let (mut lo, mut hi, mut hi_eps) = (SIGMA_LOWER, SIGMA_UPPER, at_upper);
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= SIGMA_TOLERANCE && hi_eps.epsilon >= floor {
            return Ok(accept(hi, hi_eps));
        }
        let mid = 0.5 * (lo + hi);
        let e = eps_at(mid)?;
        if e.epsilon > target_eps {
            lo = mid;
        } else {
            hi = mid;
            hi_eps = e;
        }
    }
    Err(AccountingError::Calibration(format!(
        "bisection did not converge for target epsilon {target_eps}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_lands_below_target() {
        let c = calibrate_sigma(8.0, 1e-5, 0.01, 1000).unwrap();
        let e = dpsgd_epsilon(SubsampledGaussianParams::new(c.sigma, 0.01, 1000).unwrap(), 1e-5).unwrap();
        assert!(e.epsilon > 7.92 && e.epsilon <= 8.0, "{e:?}");
        assert_eq!(e.epsilon, c.epsilon);
    }

    #[test]
    fn more_steps_need_more_noise() {
        let a = calibrate_sigma(2.0, 1e-5, 0.05, 100).unwrap();
        let b = calibrate_sigma(2.0, 1e-5, 0.05, 1000).unwrap();
        assert!(b.sigma >= a.sigma);
    }

    #[test]
    fn unreachable_targets() {
        assert!(matches!(calibrate_sigma(1e-4, 1e-5, 1.0, 1000), Err(AccountingError::Calibration(_))));
        assert!(matches!(calibrate_sigma(1e4, 1e-5, 0.01, 1), Err(AccountingError::Calibration(_))));
        assert!(calibrate_sigma(0.0, 1e-5, 0.01, 1).is_err());
    }
}
