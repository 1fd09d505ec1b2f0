//! Workloads shared by the benchmarks.

use classdisc_core::{synth_gaussian, GaussianMixtureSpec};
use ndarray::Array2;

/// `classes * per_class` Gaussian samples in `dim` dimensions with their
/// class labels.
pub fn mixture(classes: usize, dim: usize, per_class: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let data = synth_gaussian(&GaussianMixtureSpec {
        n_classes: classes,
        dim,
        separation: 4.0,
        per_class_n: per_class,
        seed,
    })
    .expect("valid mixture");
    (data.features().to_owned(), data.true_labels().to_vec())
}

/// Deterministic cluster ids in `0..k` that disagree with `labels` on
/// roughly every seventh sample.
pub fn noisy_assignments(labels: &[usize], k: usize) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| if i % 7 == 0 { (l + 1) % k } else { l % k })
        .collect()
}
