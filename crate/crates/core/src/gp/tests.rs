use super::*;
use crate::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rbf() -> Kernel {
    Kernel::rbf(1.0, 1.0).unwrap()
}

fn grid_1d(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64])
        .collect()
}

#[test]
fn empty_inputs_give_prior_variance() {
    let k = Kernel::rbf(0.7, 2.5).unwrap();
    let m = GpModel::new(k, vec![]);
    assert_eq!(m.posterior_variance(&[3.0]).unwrap(), 2.5);
}

#[test]
fn observed_points_have_zero_posterior_variance() {
    let inputs = grid_1d(-2.0, 2.0, 9);
    let m = GpModel::new(rbf(), inputs.clone());
    for x in &inputs {
        let v = m.posterior_variance(x).unwrap();
        assert!(v.abs() < 1e-8, "variance {v} at observed {x:?}");
    }
}

#[test]
fn single_point_posterior_matches_closed_form() {
    // k(1,0) = e^(-1/2), so the posterior variance at 1 is 1 - e^(-1)
    let m = GpModel::new(rbf(), vec![vec![0.0]]);
    let v = m.posterior_variance(&[1.0]).unwrap();
    let expect = 1.0 - (-1.0f64).exp();
    assert!((v - expect).abs() < 1e-8, "{v} vs {expect}");
    assert!((expect - 0.63212).abs() < 1e-5);
}

#[test]
fn variance_is_bounded_by_prior_and_monotone_in_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for trial in 0..20 {
        let k = Kernel::rbf(rng.gen_range(0.3..2.0), rng.gen_range(0.5..3.0)).unwrap();
        let mut inputs: Vec<Vec<f64>> = (0..6)
            .map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
            .collect();
        let x = vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let prior = k.eval(&x, &x);
        let mut prev = GpModel::new(k, vec![]).posterior_variance(&x).unwrap();
        assert!(prev <= prior + 1e-12);
        for upto in 1..=inputs.len() {
            let m = GpModel::new(k, inputs[..upto].to_vec());
            let v = m.posterior_variance(&x).unwrap();
            assert!(
                v <= prev + 1e-8,
                "trial {trial}: variance rose from {prev} to {v} at {upto} points"
            );
            assert!((0.0..=prior + 1e-12).contains(&v));
            prev = v;
        }
        inputs.clear();
    }
}

#[test]
fn classify_prefers_the_class_containing_the_query() {
    let a = GpModel::new(rbf(), grid_1d(-4.0, -2.0, 8));
    let b = GpModel::new(rbf(), grid_1d(2.0, 4.0, 8));
    // exact member of class 1's inputs
    assert_eq!(gp_classify(&[a.clone(), b.clone()], &[3.0]).unwrap(), 1);
    assert_eq!(gp_classify(&[a, b], &[-2.5]).unwrap(), 0);
}

#[test]
fn classify_matches_dense_grid_evaluation_between_two_clusters() {
    let a = GpModel::new(rbf(), vec![vec![-3.0], vec![-2.8], vec![-3.2]]);
    let b = GpModel::new(rbf(), vec![vec![3.0], vec![2.8], vec![3.2]]);
    let models = [a, b];
    assert_eq!(gp_classify(&models, &[2.9]).unwrap(), 1);
    // dense grid: the decision must agree with distance to the nearer
    // cluster away from the midpoint
    for i in 0..81 {
        let x = -4.0 + i as f64 * 0.1;
        if x.abs() < 0.2 {
            continue;
        }
        let want = usize::from(x > 0.0);
        assert_eq!(
            gp_classify(&models, &[x]).unwrap(),
            want,
            "grid point {x}"
        );
    }
}

#[test]
fn classify_breaks_symmetric_ties_toward_the_lowest_index() {
    let a = GpModel::new(rbf(), vec![vec![-3.0]]);
    let b = GpModel::new(rbf(), vec![vec![3.0]]);
    assert_eq!(gp_classify(&[a, b], &[0.0]).unwrap(), 0);
}

#[test]
fn classify_commutes_with_relabeling() {
    let models = [
        GpModel::new(rbf(), grid_1d(-4.0, -3.0, 5)),
        GpModel::new(rbf(), grid_1d(-0.5, 0.5, 5)),
        GpModel::new(rbf(), grid_1d(3.0, 4.0, 5)),
    ];
    let perm = [2usize, 0, 1]; // permuted[i] = models[perm[i]]
    let permuted = [
        models[2].clone(),
        models[0].clone(),
        models[1].clone(),
    ];
    for i in 0..15 {
        let x = vec![-4.5 + i as f64 * 0.63];
        let direct = gp_classify(&models, &x).unwrap();
        let relabeled = gp_classify(&permuted, &x).unwrap();
        assert_eq!(perm[relabeled], direct, "at {x:?}");
    }
}

#[test]
fn classify_rejects_mismatched_kernels() {
    let a = GpModel::new(rbf(), vec![vec![0.0]]);
    let b = GpModel::new(Kernel::rbf(2.0, 1.0).unwrap(), vec![vec![1.0]]);
    assert!(gp_classify(&[a, b], &[0.5]).is_err());
}

#[test]
fn single_point_draws_are_standard_normal() {
    let n = 100_000;
    let mut sum = 0.0f64;
    let mut sq = 0.0f64;
    for seed in 0..n {
        let v = sample_gp_function(&rbf(), &[vec![0.3]], seed as u64).unwrap()[0];
        sum += v;
        sq += v * v;
    }
    let mean = sum / n as f64;
    let var = sq / n as f64 - mean * mean;
    assert!(mean.abs() < 0.02, "mean {mean}");
    assert!((var - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn duplicate_grid_points_sample_identically() {
    let grid = vec![vec![0.5], vec![0.5], vec![-1.0], vec![0.5]];
    for seed in 0..50 {
        let s = sample_gp_function(&rbf(), &grid, seed).unwrap();
        assert!((s[0] - s[1]).abs() < 1e-6, "seed {seed}: {} vs {}", s[0], s[1]);
        assert!((s[0] - s[3]).abs() < 1e-6);
    }
}

#[test]
fn sample_covariance_converges_to_the_gram_matrix() {
    let grid = grid_1d(-2.0, 2.0, 5);
    let k = rbf();
    let draws = 10_000;
    let mut cov = vec![vec![0.0f64; 5]; 5];
    let mut means = vec![0.0f64; 5];
    let mut samples = Vec::with_capacity(draws);
    for seed in 0..draws {
        let s = sample_gp_function(&k, &grid, seed as u64).unwrap();
        for i in 0..5 {
            means[i] += s[i];
        }
        samples.push(s);
    }
    for m in &mut means {
        *m /= draws as f64;
    }
    // zero-mean prior: the empirical mean must vanish at Monte-Carlo scale
    assert!(means.iter().all(|m| m.abs() < 0.05));
    for s in &samples {
        for i in 0..5 {
            for j in 0..5 {
                cov[i][j] += (s[i] - means[i]) * (s[j] - means[j]);
            }
        }
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..5 {
        for j in 0..5 {
            cov[i][j] /= draws as f64;
            let want = k.eval(&grid[i], &grid[j]);
            num += (cov[i][j] - want).powi(2);
            den += want * want;
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel < 0.05, "relative Frobenius error {rel}");
}

fn quick_imitator() -> ImitatorConfig {
    ImitatorConfig {
        hidden_width: 64,
        max_steps: 2_000,
        ..ImitatorConfig::default()
    }
}

#[test]
fn interpolated_points_score_near_zero() {
    let train = grid_1d(-2.0, 2.0, 8);
    let cfg = ImitatorConfig::default();
    // x* is a training input; an over-parameterized imitator drives the
    // error to the training tolerance
    let s = estimate_s_b(&rbf(), &train, &train[3], 4, &cfg, 17).unwrap();
    assert!(s < 1e-4, "s_B at a training point = {s}");
}

#[test]
fn single_draw_score_is_the_plain_squared_error() {
    let train = grid_1d(-1.0, 1.0, 5);
    let cfg = quick_imitator();
    let x_star = vec![1.7];
    let s1 = estimate_s_b(&rbf(), &train, &x_star, 1, &cfg, 23).unwrap();
    let out = imitation_errors(&rbf(), &train, &[x_star], 1, &cfg, 23).unwrap();
    assert_eq!(s1, out.errors[[0, 0]]);
}

#[test]
fn score_estimator_variance_shrinks_with_draw_count() {
    let train = grid_1d(-1.5, 1.5, 6);
    let cfg = ImitatorConfig {
        hidden_width: 64,
        max_steps: 1_500,
        target_mse: 1e-5,
        ..ImitatorConfig::default()
    };
    let x_star = vec![2.3];
    let repeats = 12;
    let mut variances = Vec::new();
    for (bi, b) in [1usize, 4, 16].into_iter().enumerate() {
        let vals: Vec<f64> = (0..repeats)
            .map(|r| {
                estimate_s_b(
                    &rbf(),
                    &train,
                    &x_star,
                    b,
                    &cfg,
                    derive_seed(900 + bi as u64, r),
                )
                .unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / repeats as f64;
        let var =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (repeats - 1) as f64;
        variances.push(var);
    }
    // least-squares slope of log var against log B; 1/B decay means -1
    let lx: Vec<f64> = [1.0f64, 4.0, 16.0].iter().map(|b| b.ln()).collect();
    let ly: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / 3.0;
    let my = ly.iter().sum::<f64>() / 3.0;
    let slope = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!(
        (-1.6..=-0.5).contains(&slope),
        "variance slope {slope}, variances {variances:?}"
    );
}

#[test]
fn proposition1_holds_on_a_dense_test_grid() {
    let train = grid_1d(-3.0, 3.0, 20);
    let test = grid_1d(-3.5, 3.5, 40);
    let report = check_proposition1(&rbf(), &train, &test, 64, &quick_imitator(), 5).unwrap();
    assert!(
        report.pass_fraction >= 0.95,
        "pass fraction {}",
        report.pass_fraction
    );
}

#[test]
fn proposition1_with_empty_inputs_compares_against_the_prior() {
    let test = grid_1d(-1.0, 1.0, 10);
    let report = check_proposition1(&rbf(), &[], &test, 64, &quick_imitator(), 6).unwrap();
    // untrained imitators only add error on top of the prior draw
    assert!(report.pass_fraction >= 0.95);
    for p in &report.points {
        assert_eq!(p.posterior_var, 1.0);
    }
}

#[test]
fn proposition1_report_is_deterministic() {
    let train = grid_1d(-1.0, 1.0, 6);
    let test = grid_1d(-1.2, 1.2, 5);
    let cfg = quick_imitator();
    let a = check_proposition1(&rbf(), &train, &test, 64, &cfg, 9).unwrap();
    let b = check_proposition1(&rbf(), &train, &test, 64, &cfg, 9).unwrap();
    for (pa, pb) in a.points.iter().zip(&b.points) {
        assert_eq!(pa.s_b, pb.s_b);
        assert_eq!(pa.posterior_var, pb.posterior_var);
    }
    assert!(check_proposition1(&rbf(), &train, &test, 32, &cfg, 9).is_err());
}

#[test]
fn proposition2_mean_scores_fall_with_training_size() {
    let dist = DataDist::Uniform1d { lo: -3.0, hi: 3.0 };
    let report = check_proposition2(
        &rbf(),
        &dist,
        &[8, 32, 128],
        100,
        4,
        &quick_imitator(),
        31,
    )
    .unwrap();
    assert!(report.non_increasing, "levels {:?}", report.levels);
    assert!(report.levels[0].mean_s1 > report.levels[2].mean_s1);
}

#[test]
fn proposition2_saturates_at_the_training_tolerance_on_full_support() {
    // every support point appears in training many times over, so the
    // in-distribution score collapses to the achieved training error
    let support: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.5 - 3.0]).collect();
    let dist = DataDist::Discrete {
        points: support.clone(),
    };
    let report = check_proposition2(
        &rbf(),
        &dist,
        &[24, 240],
        60,
        3,
        &quick_imitator(),
        37,
    )
    .unwrap();
    let last = report.levels.last().unwrap();
    assert!(
        last.mean_s1 <= 20.0 * last.mean_train_mse.max(1e-9),
        "mean s1 {} vs train mse {}",
        last.mean_s1,
        last.mean_train_mse
    );
}

#[test]
fn proposition2_is_reproducible_and_validates_sizes() {
    let dist = DataDist::Uniform1d { lo: -1.0, hi: 1.0 };
    let cfg = quick_imitator();
    let a = check_proposition2(&rbf(), &dist, &[4, 8], 20, 2, &cfg, 3).unwrap();
    let b = check_proposition2(&rbf(), &dist, &[4, 8], 20, 2, &cfg, 3).unwrap();
    for (x, y) in a.levels.iter().zip(&b.levels) {
        assert_eq!(x.mean_s1, y.mean_s1);
    }
    assert!(check_proposition2(&rbf(), &dist, &[8, 4], 20, 2, &cfg, 3).is_err());
}
