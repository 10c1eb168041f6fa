mod common;

use approx::assert_relative_eq;
use dp_workbench::accounting::{
    default_orders, dpsgd_epsilon, rdp_gaussian, rdp_subsampled_gaussian, to_eps_delta, SubsampledGaussianParams,
};
use dp_workbench::dpsgd::{per_sample_gradient, per_sample_loss, separable_blobs, train_with, DpSgdConfig, Loss};
use dp_workbench::mechanisms::{exponential_mechanism_probabilities, ScoreVector, Sensitivity};
use dp_workbench::simharness::{exact_mechanism_distribution, majority_vote_accuracy, MechanismSpec, SimTeacherModel};
use dp_workbench::RngStream;

#[test]
fn gaussian_epsilon_matches_fine_order_sweep() {
    let curve = rdp_gaussian(1.0, &default_orders()).unwrap();
    let ours = to_eps_delta(&curve, 1e-5).unwrap().epsilon;
    let (dense, _) = common::dense_epsilon(|a| a / 2.0, 1e-5, common::fine_orders());
    assert!((ours - dense).abs() / dense <= 0.01, "{ours} vs {dense}");
}

#[test]
fn subsampled_rdp_matches_integral_at_integer_orders() {
    for (sigma, q) in [(0.8, 0.01), (1.0, 0.1), (2.0, 0.05), (4.0, 0.5), (1.5, 1.0)] {
        let params = SubsampledGaussianParams::new(sigma, q, 1).unwrap();
        let ints: Vec<f64> = (2..=40).map(f64::from).collect();
        let curve = rdp_subsampled_gaussian(params, &ints).unwrap();
        for (a, v) in curve.orders().iter().zip(curve.values()) {
            let oracle = common::subsampled_rdp_oracle(sigma, q, *a);
            assert_relative_eq!(*v, oracle, max_relative = 1e-6, epsilon = 1e-12);
        }
    }
}

#[test]
fn subsampling_amplifies() {
    let orders = default_orders();
    let full = rdp_gaussian(1.0, &orders).unwrap();
    let sub = rdp_subsampled_gaussian(SubsampledGaussianParams::new(1.0, 0.01, 1).unwrap(), &orders).unwrap();
    for (a, v) in sub.orders().iter().zip(sub.values()) {
        assert!(*v <= full.value_at(*a).unwrap());
    }
}

#[test]
fn moderate_configs_agree_with_dense_order_oracle() {
    // Optimal orders well inside the integer grid, where discreteness costs little.
    for (sigma, q, steps) in [(1.0, 0.01, 1000u64), (1.5, 0.05, 500), (2.0, 0.1, 100)] {
        let ours = dpsgd_epsilon(SubsampledGaussianParams::new(sigma, q, steps).unwrap(), 1e-5).unwrap();
        let (dense, alpha) = common::dense_subsampled_epsilon(sigma, q, steps, 1e-5);
        assert!(ours.epsilon >= dense * (1.0 - 1e-6), "grid cannot beat the continuum");
        assert!((ours.epsilon - dense) / dense <= 0.01, "{ours:?} vs {dense} at {alpha}");
    }
}

#[test]
fn noiseless_dpsgd_is_gradient_descent() {
    let data = separable_blobs(200, &mut RngStream::from_seed(3));
    let config = DpSgdConfig {
        clip_norm: 1e9,
        noise_multiplier: 0.0,
        sampling_rate: 1.0,
        steps: 40,
        learning_rate: 0.8,
        delta: None,
        loss: Loss::Logistic,
    };
    let mut traj = Vec::new();
    let out = train_with(&data, &config, &mut RngStream::from_seed(4), |_, w| traj.push(w.to_vec())).unwrap();
    let reference = common::vanilla_gd_logistic(&data, 0.8, 40);
    for (a, b) in traj.iter().zip(&reference) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
    assert!(out.epsilon.is_infinite());
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = RngStream::from_seed(5);
    for loss in [Loss::Logistic, Loss::Squared] {
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| 2.0 * rng.standard_normal()).collect();
            let w: Vec<f64> = (0..4).map(|_| rng.standard_normal()).collect();
            let y = if rng.unit() < 0.5 { 0.0 } else { 1.0 };
            let g = per_sample_gradient(loss, &w, &x, y).unwrap();
            for j in 0..4 {
                let h = 1e-5;
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[j] += h;
                wm[j] -= h;
                let fd = (per_sample_loss(loss, &wp, &x, y).unwrap() - per_sample_loss(loss, &wm, &x, y).unwrap()) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-3), "{loss:?} {fd} vs {}", g[j]);
            }
        }
    }
}

#[test]
fn em_probabilities_agree_with_exact_oracle() {
    let scores = vec![3.0, -1.0, 0.5, 2.0];
    let ours = exponential_mechanism_probabilities(&ScoreVector::from_scores(scores.clone()).unwrap(), Sensitivity::new(2.0).unwrap(), 1.7).unwrap();
    let exact = exact_mechanism_distribution(&MechanismSpec::GumbelTop1 { sensitivity: 2.0, epsilon: 1.7 }, &scores).unwrap();
    for (a, b) in ours.iter().zip(&exact) {
        assert_relative_eq!(*a, *b, max_relative = 1e-9);
    }
}

#[test]
fn majority_oracle_agrees_with_brute_force() {
    // Enumerate every vote vector for 5 teachers over 3 labels.
    let p = 0.5;
    let m = SimTeacherModel::uniform(p, 3).unwrap();
    let mut acc = 0.0;
    for truth in 0..3 {
        for code in 0..3usize.pow(5) {
            let votes: Vec<usize> = (0..5).map(|t| (code / 3usize.pow(t)) % 3).collect();
            let prob: f64 = votes.iter().map(|v| if *v == truth { p } else { (1.0 - p) / 2.0 }).product();
            let mut c = [0; 3];
            for v in &votes {
                c[*v] += 1;
            }
            let best = *c.iter().max().unwrap();
            if c.iter().position(|x| *x == best) == Some(truth) {
                acc += prob / 3.0;
            }
        }
    }
    assert_relative_eq!(majority_vote_accuracy(&m, 5).unwrap(), acc, max_relative = 1e-12);
}
