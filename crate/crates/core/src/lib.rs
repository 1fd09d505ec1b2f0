//! Semi-supervised class discovery.
//!
//! A representation learner is trained on the labeled classes; samples it
//! cannot place are embedded with its penultimate layer and clustered with
//! k-means; the most learnable cluster becomes a new class and the learner
//! keeps training on the grown label set. Discovery quality is measured with
//! plurality cluster accuracy and Dataset Reconstruction Accuracy.
//!
//! Modules follow the pipeline: [`dataset`] → [`learner`] → [`ood`] →
//! [`clustering`] → [`selection`] → [`engine`], with [`metrics`] for
//! evaluation and [`report`] for run output.

pub mod clustering;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod ood;
pub mod report;
pub mod seed;
pub mod selection;

pub use clustering::{choose_k, fit_with_restarts, kmeanspp_init, lloyd_fit, silhouette_score, Clustering, KMeansConfig};
pub use dataset::{load_csv, load_idx, synth_gaussian, Dataset, GaussianMixtureSpec, LabelOrigin, Provenance, SplitSpec};
pub use engine::{
    evaluate_state, load_data, run_class_count_experiment, run_dynamic, run_static, DataSource, DiscoveryState,
    ExperimentConfig, OodMode,
};
pub use error::{Error, Result};
pub use learner::{init_model, AdamConfig, Model, NetworkConfig};
pub use metrics::{cluster_accuracy, dataset_reconstruction_accuracy, nmi, OverlapMapping, ReconstructionReport};
pub use ood::OodDetector;
pub use report::{RunMode, RunReport};
pub use selection::{select, ClusterFeatures, LearnabilityConfig, SelectionPolicy};
