//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use dp_workbench::dpsgd::ToyDataset;

/// ln of ∫ N(z; 0, σ²) · ((1 − q) + q·exp((2z − 1)/(2σ²)))^α dz, by the
/// trapezoid rule in log space. Valid for real α > 1.
pub fn log_moment_integral(sigma: f64, q: f64, alpha: f64) -> f64 {
    let lo = -30.0 * sigma - 1.0;
    let hi = alpha.max(1.0) + 30.0 * sigma + 1.0;
    let h = sigma.min(1.0) / 25.0;
    let n = ((hi - lo) / h).ceil() as usize;
    let h = (hi - lo) / n as f64;
    let s2 = sigma * sigma;
    let logs: Vec<f64> = (0..=n)
        .map(|i| {
            let z = lo + i as f64 * h;
            let log_gauss = -z * z / (2.0 * s2) - 0.5 * (2.0 * std::f64::consts::PI * s2).ln();
            let t = (2.0 * z - 1.0) / (2.0 * s2);
            // ln((1 − q) + q·e^t), stable for large t
            let mix = if q >= 1.0 {
                t
            } else if t > 0.0 {
                t + q.ln() + (1.0 + (1.0 - q) / q * (-t).exp()).ln()
            } else {
                (1.0 - q).ln() + (1.0 + q / (1.0 - q) * t.exp()).ln()
            };
            log_gauss + alpha * mix
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (i, l) in logs.iter().enumerate() {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        sum += w * (l - m).exp();
    }
    m + (sum * h).ln()
}

/// Per-step RDP of the subsampled Gaussian at real order α.
pub fn subsampled_rdp_oracle(sigma: f64, q: f64, alpha: f64) -> f64 {
    (log_moment_integral(sigma, q, alpha) / (alpha - 1.0)).max(0.0)
}

/// min over a dense α grid of `rdp(α) + ln(1/δ)/(α − 1)`.
pub fn dense_epsilon(rdp: impl Fn(f64) -> f64, delta: f64, grid: impl Iterator<Item = f64>) -> (f64, f64) {
    grid.map(|a| (rdp(a) + (1.0 / delta).ln() / (a - 1.0), a))
        .fold((f64::INFINITY, 0.0), |best, x| if x.0 < best.0 { x } else { best })
}

/// α in 1.01..=512, step 0.01.
pub fn fine_orders() -> impl Iterator<Item = f64> {
    (101..=51_200).map(|i| i as f64 / 100.0)
}

/// Coarser sweep for oracles that integrate at every order, refined by a
/// golden-section search around the best point.
pub fn dense_subsampled_epsilon(sigma: f64, q: f64, steps: u64, delta: f64) -> (f64, f64) {
    let f = |a: f64| steps as f64 * subsampled_rdp_oracle(sigma, q, a) + (1.0 / delta).ln() / (a - 1.0);
    let grid: Vec<f64> = (0..=240).map(|i| 1.01 * (512.0f64 / 1.01).powf(i as f64 / 240.0)).collect();
    let (mut best, mut bi) = (f64::INFINITY, 0);
    for (i, a) in grid.iter().enumerate() {
        let v = f(*a);
        if v < best {
            best = v;
            bi = i;
        }
    }
    let (mut lo, mut hi) = (grid[bi.saturating_sub(1)], grid[(bi + 1).min(grid.len() - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let (a, b) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let a = 0.5 * (lo + hi);
    let v = f(a);
    if v < best {
        (v, a)
    } else {
        (best, grid[bi])
    }
}

/// Full-batch gradient descent on the mean of per-example gradients, with
/// gradients written out by hand.
pub fn vanilla_gd_logistic(data: &ToyDataset, lr: f64, steps: usize) -> Vec<Vec<f64>> {
    let d = data.dim();
    let mut w = vec![0.0; d];
    let mut traj = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut g = vec![0.0; d];
        for i in 0..data.len() {
            let x = data.features(i);
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            for j in 0..d {
                g[j] += (p - data.target(i)) * x[j];
            }
        }
        for j in 0..d {
            w[j] -= lr * g[j] / data.len() as f64;
        }
        traj.push(w.clone());
    }
    traj
}
