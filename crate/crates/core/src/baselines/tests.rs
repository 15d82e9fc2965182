#![allow(clippy::needless_range_loop)] // oracle code mirrors the index math

use super::*;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn nearest_mean_recalls_single_exemplars() {
    let mut m = NearestMeanModel::new(3, 2);
    m.update(&[0.0, 0.0], 0).unwrap();
    m.update(&[5.0, 5.0], 1).unwrap();
    m.update(&[-4.0, 2.0], 2).unwrap();
    assert_eq!(m.predict(&[0.1, -0.1]).unwrap(), 0);
    assert_eq!(m.predict(&[5.0, 5.0]).unwrap(), 1);
    assert_eq!(m.predict(&[-4.0, 2.0]).unwrap(), 2);
}

#[test]
fn nearest_mean_matches_brute_force_oracle() {
    // ten hand-listed 2-D points over three classes
    let points: [([f32; 2], usize); 10] = [
        ([0.0, 1.0], 0),
        ([1.0, 2.0], 0),
        ([-1.0, 0.5], 0),
        ([4.0, 4.0], 1),
        ([5.0, 3.0], 1),
        ([4.5, 5.5], 1),
        ([0.0, -6.0], 2),
        ([1.0, -5.0], 2),
        ([-1.0, -7.0], 2),
        ([0.5, -5.5], 2),
    ];
    let mut m = NearestMeanModel::new(3, 2);
    for (x, y) in points {
        m.update(&x, y).unwrap();
    }
    // brute-force means over the same list
    let mut sums = [[0.0f64; 2]; 3];
    let mut counts = [0usize; 3];
    for (x, y) in points {
        sums[y][0] += x[0] as f64;
        sums[y][1] += x[1] as f64;
        counts[y] += 1;
    }
    for c in 0..3 {
        for j in 0..2 {
            let oracle = sums[c][j] / counts[c] as f64;
            assert!((m.mean(c)[j] - oracle).abs() < 1e-12);
        }
    }
    for (x, _) in points {
        let oracle = (0..3)
            .min_by(|&a, &b| {
                let da: f64 = (0..2)
                    .map(|j| (x[j] as f64 - sums[a][j] / counts[a] as f64).powi(2))
                    .sum();
                let db: f64 = (0..2)
                    .map(|j| (x[j] as f64 - sums[b][j] / counts[b] as f64).powi(2))
                    .sum();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        assert_eq!(m.predict(&x).unwrap(), oracle);
    }
}

#[test]
fn nearest_mean_excludes_classes_without_data() {
    let mut m = NearestMeanModel::new(3, 2);
    assert!(m.predict(&[0.0, 0.0]).is_err());
    m.update(&[10.0, 10.0], 2).unwrap();
    // class 2 is the only candidate even though 0 and 1 have closer zero means
    assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 2);
}

#[test]
fn slda_single_sample_leaves_identity_dominated_precision() {
    let mut m = SldaModel::new(2, 3);
    m.update(&[0.5, -1.0, 2.0], 1).unwrap();
    for (got, want) in m.mean(1).iter().zip([0.5, -1.0, 2.0]) {
        assert!((got - want).abs() < 1e-7);
    }
    // one sample has zero scatter: the shrinkage blend is eps * I exactly
    let cov = m.covariance();
    assert!(cov.iter().all(|&v| v.abs() < 1e-12));
}

#[test]
fn slda_streaming_matches_batch_covariance_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 200;
    let dim = 5;
    let samples: Vec<(Vec<f32>, usize)> = (0..n)
        .map(|i| {
            let y = i % 3;
            let x: Vec<f32> = (0..dim)
                .map(|j| rng.gen_range(-1.0f32..1.0) * (j as f32 + 1.0) + y as f32)
                .collect();
            (x, y)
        })
        .collect();
    let mut m = SldaModel::new(3, dim);
    for (x, y) in &samples {
        m.update(x, *y).unwrap();
    }
    // batch oracle: pooled within-class scatter over final means, divided by n
    let mut means = vec![vec![0.0f64; dim]; 3];
    let mut counts = [0f64; 3];
    for (x, y) in &samples {
        counts[*y] += 1.0;
        for j in 0..dim {
            means[*y][j] += x[j] as f64;
        }
    }
    for c in 0..3 {
        for j in 0..dim {
            means[c][j] /= counts[c];
        }
    }
    let mut oracle = Array2::<f64>::zeros((dim, dim));
    for (x, y) in &samples {
        for i in 0..dim {
            for j in 0..dim {
                oracle[[i, j]] +=
                    (x[i] as f64 - means[*y][i]) * (x[j] as f64 - means[*y][j]);
            }
        }
    }
    oracle /= n as f64;
    let got = m.covariance();
    let num: f64 = (&got - &oracle).iter().map(|v| v * v).sum::<f64>().sqrt();
    let den: f64 = oracle.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(num / den < 1e-6, "relative Frobenius error {}", num / den);
}

#[test]
fn slda_update_order_changes_nothing_beyond_roundoff() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<(Vec<f32>, usize)> = (0..120)
        .map(|i| {
            let y = i % 2;
            let x: Vec<f32> = (0..4).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
            (x, y)
        })
        .collect();
    let mut interleaved = SldaModel::new(2, 4);
    for (x, y) in &samples {
        interleaved.update(x, *y).unwrap();
    }
    let mut sorted = SldaModel::new(2, 4);
    for want in 0..2 {
        for (x, y) in &samples {
            if *y == want {
                sorted.update(x, *y).unwrap();
            }
        }
    }
    let a = interleaved.covariance();
    let b = sorted.covariance();
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x - y).abs() < 1e-8);
    }
    for c in 0..2 {
        for (x, y) in interleaved.mean(c).iter().zip(sorted.mean(c)) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn slda_identity_covariance_classifies_by_proximity() {
    let m = SldaModel::from_parts(
        vec![vec![0.0, 0.0], vec![6.0, 0.0]],
        Array2::eye(2),
        50,
    );
    assert_eq!(m.predict(&[1.0, 0.0], 0.1).unwrap(), 0);
    assert_eq!(m.predict(&[5.0, 0.0], 0.1).unwrap(), 1);
}

#[test]
fn slda_decision_boundary_matches_closed_form_lda() {
    // known anisotropic covariance; boundary normal is pinned by the
    // shrinkage-blended precision applied to the mean difference
    let sigma = Array2::from_shape_vec((2, 2), vec![2.0, 0.6, 0.6, 0.5]).unwrap();
    let mu0 = vec![0.0, 0.0];
    let mu1 = vec![3.0, 1.0];
    let eps = 0.1;
    let m = SldaModel::from_parts(vec![mu0.clone(), mu1.clone()], sigma.clone(), 100);

    // closed form: w = B^-1 (mu1 - mu0), B = (1-eps) Sigma + eps I
    let b = |i: usize, j: usize| (1.0 - eps) * sigma[[i, j]] + if i == j { eps } else { 0.0 };
    let det = b(0, 0) * b(1, 1) - b(0, 1) * b(1, 0);
    let inv = [
        [b(1, 1) / det, -b(0, 1) / det],
        [-b(1, 0) / det, b(0, 0) / det],
    ];
    let dmu = [mu1[0] - mu0[0], mu1[1] - mu0[1]];
    let w = [
        inv[0][0] * dmu[0] + inv[0][1] * dmu[1],
        inv[1][0] * dmu[0] + inv[1][1] * dmu[1],
    ];
    // score difference s1(x) - s0(x) = w . x - w . (mu0 + mu1)/2; compare to
    // the model's scores at probe points
    let probes = [[0.2f32, -0.7], [1.4, 0.3], [2.9, 1.2], [-1.0, 2.0]];
    for p in probes {
        let scores = m
            .scores_batch(
                &Array2::from_shape_vec((1, 2), p.to_vec()).unwrap(),
                eps,
            )
            .unwrap();
        let got = scores[[0, 1]] - scores[[0, 0]];
        let want = w[0] * (p[0] as f64 - (mu0[0] + mu1[0]) / 2.0)
            + w[1] * (p[1] as f64 - (mu0[1] + mu1[1]) / 2.0);
        assert!((got - want).abs() < 1e-4, "probe {p:?}: {got} vs {want}");
    }
}

#[test]
fn reservoir_keeps_everything_under_capacity() {
    let mut buf = ReplayBuffer::new(500, 1);
    for i in 0..300 {
        buf.insert(&[i as f32], i % 10);
    }
    assert_eq!(buf.len(), 300);
    assert_eq!(buf.seen(), 300);
    for i in 300..900 {
        buf.insert(&[i as f32], i % 10);
    }
    assert_eq!(buf.len(), 500);
}

#[test]
fn reservoir_retention_frequencies_sit_in_binomial_bounds() {
    let capacity = 10;
    let inserts = 10_000usize;
    let trials = 10_000usize;
    let mut freq = vec![0u32; inserts];
    for t in 0..trials {
        let mut buf = ReplayBuffer::new(capacity, t as u64);
        for i in 0..inserts {
            buf.insert(&[0.0], i);
        }
        assert_eq!(buf.len(), capacity);
        for (_, idx) in buf.items() {
            freq[*idx] += 1;
        }
    }
    // each item retained with p = capacity / inserts; over `trials` repeats
    // the count is Binomial(trials, p). With 10k items a few 3-sigma
    // excursions are expected; the bound is on their frequency.
    let p = capacity as f64 / inserts as f64;
    let mean = trials as f64 * p;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    let outside = freq
        .iter()
        .filter(|&&f| (f as f64 - mean).abs() > 3.0 * sigma)
        .count();
    assert!(
        (outside as f64) < 0.01 * inserts as f64,
        "{outside} of {inserts} items outside 3 sigma"
    );
    let total: u64 = freq.iter().map(|&f| f as u64).sum();
    assert_eq!(total, (trials * capacity) as u64);
}

#[test]
fn labels_trick_over_all_classes_is_exactly_fine_tuning() {
    let mut ft = DiscriminativeModel::new(6, &[8, 8], 4, DiscMode::Finetune, 99).unwrap();
    let mut lt = DiscriminativeModel::new(6, &[8, 8], 4, DiscMode::LabelsTrick, 99).unwrap();
    assert_eq!(ft.param_hash(), lt.param_hash());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = Array2::from_shape_fn((5, 6), |_| rng.gen_range(-1.0f32..1.0));
    let labels = vec![0, 1, 2, 3, 1];
    let all = vec![0, 1, 2, 3];
    let l1 = ft.train_step(&batch, &labels, None, &all, 0.003).unwrap();
    let l2 = lt.train_step(&batch, &labels, None, &all, 0.003).unwrap();
    assert_eq!(l1, l2);
    assert_eq!(ft.param_hash(), lt.param_hash());
}

#[test]
fn labels_trick_requires_current_classes() {
    let mut lt = DiscriminativeModel::new(4, &[5], 3, DiscMode::LabelsTrick, 1).unwrap();
    let batch = Array2::zeros((1, 4));
    assert!(lt.train_step(&batch, &[0], None, &[], 0.01).is_err());
}

#[test]
fn replay_draws_exactly_batch_size_extra_samples() {
    let mut er = DiscriminativeModel::new(4, &[5], 3, DiscMode::Er, 2).unwrap();
    let mut buf = ReplayBuffer::new(10, 5);
    for i in 0..10 {
        buf.insert(&[i as f32; 4], i % 3);
    }
    let batch = Array2::from_elem((3, 4), 0.5f32);
    // buffer draw is b = 3 samples; insertion happens after the draw
    let seen_before = buf.seen();
    er.train_step(&batch, &[0, 1, 2], Some(&mut buf), &[0, 1, 2], 0.01)
        .unwrap();
    assert_eq!(buf.seen(), seen_before + 3);

    // a model trained with replay must differ from one trained without,
    // given identical seeds, because the buffer contributes gradient terms
    let mut plain = DiscriminativeModel::new(4, &[5], 3, DiscMode::Finetune, 2).unwrap();
    plain
        .train_step(&batch, &[0, 1, 2], None, &[0, 1, 2], 0.01)
        .unwrap();
    assert_ne!(er.param_hash(), plain.param_hash());
}

#[test]
fn er_with_empty_buffer_trains_on_batch_alone() {
    let mut er = DiscriminativeModel::new(4, &[5], 3, DiscMode::Er, 7).unwrap();
    let mut ft = DiscriminativeModel::new(4, &[5], 3, DiscMode::Finetune, 7).unwrap();
    let mut buf = ReplayBuffer::new(10, 5);
    let batch = Array2::from_elem((2, 4), 0.25f32);
    er.train_step(&batch, &[0, 1], Some(&mut buf), &[0, 1], 0.01)
        .unwrap();
    ft.train_step(&batch, &[0, 1], None, &[0, 1], 0.01).unwrap();
    assert_eq!(er.param_hash(), ft.param_hash());
    assert_eq!(buf.len(), 2);
}

#[test]
fn buffer_draws_with_replacement_when_short() {
    let mut buf = ReplayBuffer::new(10, 3);
    buf.insert(&[1.0], 0);
    buf.insert(&[2.0], 1);
    let drawn = buf.draw(5);
    assert_eq!(drawn.len(), 5);
    // only two distinct stored items exist, so repeats are forced
    let distinct: std::collections::HashSet<u32> = drawn
        .iter()
        .map(|(x, _)| x[0].to_bits())
        .collect();
    assert!(distinct.len() <= 2);

    // and without replacement when the buffer covers the request
    for i in 2..10 {
        buf.insert(&[i as f32 + 1.0], i);
    }
    let drawn = buf.draw(10);
    let distinct: std::collections::HashSet<u32> = drawn
        .iter()
        .map(|(x, _)| x[0].to_bits())
        .collect();
    assert_eq!(distinct.len(), 10);
    assert!(buf.draw(0).is_empty());
}
