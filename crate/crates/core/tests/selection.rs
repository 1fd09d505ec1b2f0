use classdisc_core::clustering::fit_with_restarts;
use classdisc_core::metrics::cluster_accuracy;
use classdisc_core::seed::rng;
use classdisc_core::selection::{density_score, learnability_scores, MIN_SCORABLE_SIZE};
use classdisc_core::{select, ClusterFeatures, KMeansConfig, LearnabilityConfig, SelectionPolicy};
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn blobs(seed: u64, per_blob: usize, centers: &[[f64; 4]], spread: f64) -> Array2<f64> {
    let mut r = rng(seed);
    let mut x = Array2::zeros((per_blob * centers.len(), 4));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        for (v, &c) in row.iter_mut().zip(&centers[i / per_blob]) {
            *v = c + spread * r.sample::<f64, _>(StandardNormal);
        }
    }
    x
}

#[test]
fn far_apart_blobs_are_learnable() {
    let x = blobs(1, 100, &[[0.0; 4], [10.0, 10.0, 0.0, 0.0]], 1.0);
    let a: Vec<usize> = (0..200).map(|i| i / 100).collect();
    let s = learnability_scores(x.view(), &a, &LearnabilityConfig::default(), 3).unwrap();
    assert_eq!(s.len(), 2);
    assert!(s.iter().all(|c| c.scorable && c.accuracy > 0.95), "{s:?}");
}

#[test]
fn randomly_split_blob_is_a_coin_flip() {
    let x = blobs(2, 200, &[[0.0; 4]], 1.0);
    let mut scores = Vec::new();
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let mut a: Vec<usize> = (0..200).map(|i| i % 2).collect();
        a.shuffle(&mut r);
        let s = learnability_scores(x.view(), &a, &LearnabilityConfig::default(), seed).unwrap();
        scores.extend(s.iter().map(|c| c.accuracy));
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    assert!((mean - 0.5).abs() <= 0.15, "mean {mean}, scores {scores:?}");
}

#[test]
fn duplicated_points_score_one() {
    let mut x = Array2::zeros((10, 4));
    x.slice_mut(ndarray::s![5.., ..]).fill(3.0);
    let a: Vec<usize> = (0..10).map(|i| i / 5).collect();
    let s = learnability_scores(x.view(), &a, &LearnabilityConfig::default(), 0).unwrap();
    assert!(s.iter().all(|c| c.accuracy == 1.0), "{s:?}");
}

#[test]
fn small_clusters_are_flagged_and_degenerate_input_rejected() {
    let x = blobs(3, 20, &[[0.0; 4], [8.0; 4]], 1.0);
    let mut a: Vec<usize> = (0..40).map(|i| i / 20).collect();
    for v in a.iter_mut().take(MIN_SCORABLE_SIZE - 1) {
        *v = 2;
    }
    let s = learnability_scores(x.view(), &a, &LearnabilityConfig::default(), 0).unwrap();
    assert_eq!(s.iter().map(|c| c.scorable).collect::<Vec<_>>(), [true, true, false]);
    assert_eq!(s[2].accuracy, 0.0);
    assert!(learnability_scores(x.view(), &vec![0; 40], &LearnabilityConfig::default(), 0).is_err());
}

#[test]
fn density_examples() {
    let x = ndarray::array![[0.0], [1.0], [3.0], [10.0]];
    let centroids = ndarray::array![[0.0], [10.0]];
    let d = density_score(x.view(), &centroids, &[0, 0, 0, 1]).unwrap();
    assert_eq!(d, vec![4.0 / 3.0, 0.0]);
    let d = density_score(ndarray::array![[1.0], [3.0]].view(), &ndarray::array![[2.0]], &[0, 0]).unwrap();
    assert_eq!(d, vec![1.0]);

    let tight = blobs(4, 50, &[[0.0; 4]], 0.5);
    let loose = blobs(5, 50, &[[20.0; 4]], 3.0);
    let mut both = tight.clone();
    both.append(ndarray::Axis(0), loose.view()).unwrap();
    let a: Vec<usize> = (0..100).map(|i| i / 50).collect();
    let c = fit_with_restarts(both.view(), &KMeansConfig { k: 2, ..KMeansConfig::default() }).unwrap();
    let d = density_score(both.view(), &c.centroids, &c.assignments).unwrap();
    let tight_id = c.assignments[0];
    assert!(d[tight_id] < d[1 - tight_id]);
    assert_eq!(c.assignments, a.iter().map(|&v| if v == 0 { tight_id } else { 1 - tight_id }).collect::<Vec<_>>());
}

/// Reported only: the density of a candidate cluster is not expected to
/// track its purity.
#[test]
fn density_purity_rank_correlation_is_reported() {
    let centers: Vec<[f64; 4]> = (0..5).map(|c| [c as f64 * 2.5, (c % 2) as f64 * 2.5, 0.0, 0.0]).collect();
    let x = blobs(6, 60, &centers, 1.0);
    let truth: Vec<usize> = (0..300).map(|i| i / 60).collect();
    let c = fit_with_restarts(x.view(), &KMeansConfig { k: 15, ..KMeansConfig::default() }).unwrap();
    let d = density_score(x.view(), &c.centroids, &c.assignments).unwrap();
    let mapping = cluster_accuracy(&c.assignments, &truth).unwrap();
    let pairs: Vec<(f64, f64)> = mapping.clusters.iter().map(|m| (d[m.cluster_id], m.accuracy)).collect();
    let rank = |v: Vec<f64>| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let rd = rank(pairs.iter().map(|p| p.0).collect());
    let ra = rank(pairs.iter().map(|p| p.1).collect());
    let n = rd.len() as f64;
    let d2: f64 = rd.iter().zip(&ra).map(|(a, b)| (a - b).powi(2)).sum();
    let rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
    eprintln!("density vs cluster accuracy Spearman rho over {} clusters: {rho:.3}", pairs.len());
    assert!((-1.0..=1.0).contains(&rho));
}

fn features(learn: &[f64], sizes: &[usize]) -> Vec<ClusterFeatures> {
    learn
        .iter()
        .zip(sizes)
        .enumerate()
        .map(|(id, (&l, &size))| ClusterFeatures {
            cluster_id: id,
            size,
            learnability: l,
            density: 1.0 - l,
            scorable: true,
        })
        .collect()
}

#[test]
fn policy_examples() {
    let f = features(&[0.6, 0.95, 0.7], &[10, 10, 10]);
    assert_eq!(select(&f, &SelectionPolicy::Learnability).unwrap(), [1]);
    let f = features(&[0.99, 0.96, 0.80], &[10, 10, 10]);
    assert_eq!(select(&f, &SelectionPolicy::Threshold { min_accuracy: 0.95 }).unwrap(), [0, 1]);
    assert_eq!(select(&f, &SelectionPolicy::Threshold { min_accuracy: 0.99 }).unwrap(), Vec::<usize>::new());
    let f = features(&[0.9, 0.9, 0.9], &[5, 12, 12]);
    assert_eq!(select(&f, &SelectionPolicy::Learnability).unwrap(), [1]);
    let r = SelectionPolicy::Random { seed: 8 };
    assert_eq!(select(&f, &r).unwrap(), select(&f, &r).unwrap());
    assert!(select(&[], &SelectionPolicy::Learnability).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_ignores_list_order(
        learn in prop::collection::vec(0u8..5, 1..10),
        sizes in prop::collection::vec(5usize..8, 10),
        seed in 0u64..1000,
    ) {
        let learn: Vec<f64> = learn.iter().map(|&l| f64::from(l) / 4.0).collect();
        let f = features(&learn, &sizes[..learn.len()]);
        let mut shuffled = f.clone();
        shuffled.shuffle(&mut rng(seed));
        for policy in [
            SelectionPolicy::Learnability,
            SelectionPolicy::Density,
            SelectionPolicy::Random { seed },
            SelectionPolicy::Threshold { min_accuracy: 0.5 },
        ] {
            prop_assert_eq!(select(&f, &policy).unwrap(), select(&shuffled, &policy).unwrap());
        }
    }

    #[test]
    fn learnability_follows_relabeling(seed in 0u64..200) {
        let x = blobs(seed, 15, &[[0.0; 4], [3.0, 0.0, 0.0, 0.0], [0.0, 3.0, 0.0, 0.0]], 1.0);
        let a: Vec<usize> = (0..45).map(|i| i / 15).collect();
        let mut perm = [4usize, 0, 7];
        perm.shuffle(&mut rng(seed));
        let renamed: Vec<usize> = a.iter().map(|&c| perm[c]).collect();
        let cfg = LearnabilityConfig { epochs: 2, ..LearnabilityConfig::default() };
        let base = learnability_scores(x.view(), &a, &cfg, seed).unwrap();
        let moved = learnability_scores(x.view(), &renamed, &cfg, seed).unwrap();
        for s in &base {
            let m = moved.iter().find(|m| m.cluster_id == perm[s.cluster_id]).unwrap();
            prop_assert_eq!(m.accuracy, s.accuracy);
            prop_assert_eq!(m.size, s.size);
        }
    }
}
