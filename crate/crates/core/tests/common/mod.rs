#![allow(dead_code)]

use std::path::PathBuf;

use classdisc_core::{load_idx, Dataset, ExperimentConfig};

/// `CLASSDISC_MNIST_DIR`, or `data/mnist` at the workspace root.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("CLASSDISC_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn mnist_paths() -> (PathBuf, PathBuf) {
    let dir = mnist_dir();
    (dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))
}

/// The MNIST training set, or `None` when the files are not there.
pub fn mnist_train() -> Option<Dataset> {
    let (images, labels) = mnist_paths();
    if !images.is_file() || !labels.is_file() {
        return None;
    }
    Some(load_idx(&images, &labels).expect("MNIST files parse"))
}

/// Digits 0-4 labeled, 5-9 held out, at most 2000 samples per class. Every
/// random stream is keyed on `seed`.
pub fn mnist_config(seed: u64) -> ExperimentConfig {
    let (images, labels) = mnist_paths();
    let text = serde_json::json!({
        "data": {"source": "idx", "images": images, "labels": labels},
        "split": {"held_out_classes": [5, 6, 7, 8, 9], "per_class_cap": 2000, "seed": seed},
        "adam": {"seed": seed},
        "kmeans": {"seed": seed},
        "seed": seed,
    });
    ExperimentConfig::from_json(&text.to_string()).expect("valid config")
}

/// Ten unit-variance Gaussian classes in 16 dimensions, centers at radius 6,
/// 200 samples each; classes 5-9 held out.
pub fn synthetic_config(seed: u64) -> ExperimentConfig {
    let text = serde_json::json!({
        "data": {"source": "synthetic", "n_classes": 10, "dim": 16, "separation": 6.0, "per_class_n": 200, "seed": seed},
        "split": {"held_out_classes": [5, 6, 7, 8, 9], "seed": seed},
        "adam": {"seed": seed},
        "kmeans": {"seed": seed},
        "seed": seed,
    });
    ExperimentConfig::from_json(&text.to_string()).expect("valid config")
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
