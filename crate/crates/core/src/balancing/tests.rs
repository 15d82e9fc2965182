use super::*;
use crate::classifier::argmin;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(seed: u64, gens: usize) -> CmaConfig {
    CmaConfig {
        max_generations: gens,
        seed,
        ..CmaConfig::default()
    }
}

#[test]
fn sphere_function_converges() {
    let fitness = |v: &[f64]| -v.iter().map(|x| x * x).sum::<f64>();
    let x0 = [1.0, -0.8, 0.6, 1.2, -1.1];
    let config = CmaConfig {
        initial_std: 0.3,
        max_generations: 200,
        seed: 4,
        ..CmaConfig::default()
    };
    let (best, _) = cma_es_maximize(fitness, &x0, &config).unwrap();
    let norm: f64 = best.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-3, "||best|| = {norm}");
}

#[test]
fn one_dimensional_quadratic_from_tiny_step_size() {
    // the balancing defaults: sigma0 = 0.001 far from the optimum at 0.7,
    // so step-size adaptation has to grow its way there
    let fitness = |v: &[f64]| -(v[0] - 0.7) * (v[0] - 0.7);
    let (best, _) = cma_es_maximize(fitness, &[0.0], &cfg(1, 300)).unwrap();
    assert!((best[0] - 0.7).abs() < 1e-3, "best = {}", best[0]);
}

#[test]
fn constant_fitness_returns_an_evaluated_point() {
    let fitness = |_: &[f64]| 0.5;
    let (best, f) = cma_es_maximize(fitness, &[0.1, 0.2], &cfg(2, 50)).unwrap();
    assert_eq!(f, 0.5);
    assert_eq!(best.len(), 2);
    assert!(best.iter().all(|v| v.is_finite()));
}

#[test]
fn non_finite_fitness_is_negative_infinity() {
    // everything below zero is NaN; the best candidate must still be valid
    let fitness = |v: &[f64]| {
        if v[0] < 0.0 {
            f64::NAN
        } else {
            -(v[0] - 0.002).abs()
        }
    };
    let (best, f) = cma_es_maximize(fitness, &[0.001], &cfg(3, 100)).unwrap();
    assert!(f.is_finite());
    assert!(best[0] >= 0.0);
}

#[test]
fn fixed_seed_reproduces_the_run() {
    let fitness = |v: &[f64]| -(v[0] * v[0] + v[1] * v[1]);
    let a = cma_es_maximize(fitness, &[0.5, -0.5], &cfg(9, 40)).unwrap();
    let b = cma_es_maximize(fitness, &[0.5, -0.5], &cfg(9, 40)).unwrap();
    assert_eq!(a, b);
    let c = cma_es_maximize(fitness, &[0.5, -0.5], &cfg(10, 40)).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn population_below_two_is_rejected() {
    let config = CmaConfig {
        population: 1,
        ..CmaConfig::default()
    };
    assert!(cma_es_maximize(|_: &[f64]| 0.0, &[0.0], &config).is_err());
}

fn inflated_two_class_fixture() -> (Array2<f64>, Vec<usize>) {
    // correct class always has the smaller latent score, but class-1 columns
    // are inflated 10x, so unscaled argmin mislabels every class-1 sample
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 200;
    let mut scores = Array2::<f64>::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let own: f64 = rng.gen_range(0.1..0.5);
        let other: f64 = rng.gen_range(1.0..2.0);
        let (s0, s1) = if label == 0 { (own, other) } else { (other, own) };
        scores[[i, 0]] = s0;
        scores[[i, 1]] = s1 * 10.0;
        labels.push(label);
    }
    (scores, labels)
}

#[test]
fn grid_scan_oracle_and_fit_scalars_recover_inflated_class() {
    let (scores, labels) = inflated_two_class_fixture();
    let unscaled = scaled_accuracy(&scores, &labels, &[0.0, 0.0]);
    assert!(unscaled < 0.6, "fixture should start broken, got {unscaled}");

    // exhaustive 1-D scan over the class-1 ratio: only s1/s0 matters
    let mut oracle_best = 0.0f64;
    for k in 0..600 {
        let log_ratio = -6.0 + k as f64 * 0.02;
        let acc = scaled_accuracy(&scores, &labels, &[0.0, log_ratio]);
        oracle_best = oracle_best.max(acc);
    }
    assert_eq!(oracle_best, 1.0, "grid oracle must reach 100%");

    let fitted = fit_scalars(&scores, &labels, &cfg(5, 300)).unwrap();
    let fitted_acc = scaled_accuracy(&scores, &labels, &fitted.log_scalars);
    assert_eq!(fitted_acc, 1.0, "fitted scalars {fitted:?}");
    assert!(fitted.scalars().iter().all(|&s| s > 0.0));
}

#[test]
fn perfectly_ranked_scores_stay_perfect() {
    let mut scores = Array2::<f64>::zeros((40, 3));
    let mut labels = Vec::new();
    for i in 0..40 {
        let label = i % 3;
        for c in 0..3 {
            scores[[i, c]] = if c == label { 0.1 } else { 1.0 + c as f64 };
        }
        labels.push(label);
    }
    let fitted = fit_scalars(&scores, &labels, &cfg(6, 60)).unwrap();
    assert_eq!(scaled_accuracy(&scores, &labels, &fitted.log_scalars), 1.0);
}

#[test]
fn fitted_scalars_never_lose_to_identity_on_the_fitting_set() {
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = 60;
        let scores = Array2::<f64>::from_shape_fn((n, 4), |_| rng.gen_range(0.0..2.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let identity_acc = scaled_accuracy(&scores, &labels, &[0.0; 4]);
        let fitted = fit_scalars(&scores, &labels, &cfg(seed, 40)).unwrap();
        let fitted_acc = scaled_accuracy(&scores, &labels, &fitted.log_scalars);
        assert!(
            fitted_acc >= identity_acc,
            "seed {seed}: {fitted_acc} < {identity_acc}"
        );
    }
}

#[test]
fn fit_scalars_rejects_single_class_sets() {
    let scores = Array2::<f64>::zeros((10, 3));
    let labels = vec![1usize; 10];
    assert!(fit_scalars(&scores, &labels, &cfg(0, 10)).is_err());
}

#[test]
fn hand_three_class_rescale_moves_the_argmin() {
    let scalars = BalancingScalars {
        log_scalars: vec![0.4f64.ln(), 0.0, 0.0],
    };
    let rescaled = apply_scalars(&[2.0, 1.0, 3.0], &scalars).unwrap();
    assert_eq!(argmin(&[2.0, 1.0, 3.0]), 1);
    assert_eq!(argmin(&rescaled), 0);
    assert!((rescaled[0] - 0.8).abs() < 1e-12);
}

#[test]
fn dominant_scalar_forces_the_other_class() {
    let scalars = BalancingScalars {
        log_scalars: vec![0.0, 300.0],
    };
    for s in [[0.5, 0.1], [2.0, 1.9], [0.9, 0.0001]] {
        let rescaled = apply_scalars(&s, &scalars).unwrap();
        assert_eq!(argmin(&rescaled), 0);
    }
    // a class-1 score of exactly zero survives any scaling
    let rescaled = apply_scalars(&[0.5, 0.0], &scalars).unwrap();
    assert_eq!(argmin(&rescaled), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn uniform_positive_scaling_preserves_argmin(
        rows in proptest::collection::vec(
            proptest::collection::vec(0.0f64..10.0, 5), 1..20),
        scale in 0.01f64..100.0,
    ) {
        let shift = scale.ln();
        for row in &rows {
            let base: Vec<f64> = row.clone();
            let scaled = apply_scalars(&base, &BalancingScalars {
                log_scalars: vec![shift; 5],
            }).unwrap();
            prop_assert_eq!(argmin(&base), argmin(&scaled));
        }
    }
}

#[test]
fn equal_budget_min_rule_and_errors() {
    assert_eq!(
        equal_budget_schedule(&[5000, 5000], true, None).unwrap(),
        vec![5000, 5000]
    );
    assert_eq!(
        equal_budget_schedule(&[10000, 2500, 5000], true, None).unwrap(),
        vec![2500, 2500, 2500]
    );
    assert!(equal_budget_schedule(&[100, 0, 50], true, None).is_err());
    assert_eq!(
        equal_budget_schedule(&[10, 20], false, Some(7)).unwrap(),
        vec![7, 7]
    );
    assert!(equal_budget_schedule(&[10, 20], false, None).is_err());
    assert!(equal_budget_schedule(&[], true, None).is_err());
}

#[test]
fn equal_budget_is_permutation_equivariant() {
    let counts = [9usize, 3, 7, 5];
    let sched = equal_budget_schedule(&counts, true, None).unwrap();
    let permuted = [3usize, 5, 9, 7];
    let sched_p = equal_budget_schedule(&permuted, true, None).unwrap();
    // min rule: every entry equals the global min under any permutation
    assert_eq!(sched, vec![3; 4]);
    assert_eq!(sched_p, vec![3; 4]);
}
