//! Experiment configuration (JSON). Unknown keys are rejected everywhere.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::clustering::KMeansConfig;
use crate::dataset::{load_csv, load_idx, synth_gaussian, Dataset, GaussianMixtureSpec, SplitSpec};
use crate::error::{Error, Result};
use crate::learner::AdamConfig;
use crate::ood::{check_quantile, DEFAULT_QUANTILE};
use crate::selection::{LearnabilityConfig, SelectionPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(GaussianMixtureSpec),
    Idx { images: PathBuf, labels: PathBuf },
    Csv { path: PathBuf },
}

pub fn load_data(source: &DataSource) -> Result<Dataset> {
    let exists = |field: &str, p: &PathBuf| -> Result<()> {
        if p.is_file() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("data.{field}: file not found: {}", p.display())))
        }
    };
    match source {
        DataSource::Synthetic(spec) => synth_gaussian(spec),
        DataSource::Idx { images, labels } => {
            exists("images", images)?;
            exists("labels", labels)?;
            load_idx(images, labels)
        }
        DataSource::Csv { path } => {
            exists("path", path)?;
            load_csv(path)
        }
    }
}

/// Hidden layer widths of the representation learner; the input width and
/// class count come from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSpec {
    pub hidden_dims: Vec<usize>,
}

impl Default for NetSpec {
    fn default() -> Self {
        NetSpec { hidden_dims: vec![128] }
    }
}

/// How incoming unlabeled samples are split between existing classes and
/// the OOD pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum OodMode {
    /// Ground truth decides.
    #[default]
    Oracle,
    /// Confidence threshold calibrated at `quantile` on the labeled data.
    Detector {
        #[serde(default = "default_quantile")]
        quantile: f64,
    },
}

fn default_quantile() -> f64 {
    DEFAULT_QUANTILE
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub split: SplitSpec,
    #[serde(default)]
    pub net: NetSpec,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub kmeans: KMeansConfig,
    #[serde(default)]
    pub policy: SelectionPolicy,
    #[serde(default)]
    pub learnability: LearnabilityConfig,
    /// Epochs on the initial labeled classes; 0 leaves the embedder
    /// untrained (the random-embedding baseline).
    #[serde(default = "one")]
    pub epochs_initial: usize,
    #[serde(default = "one")]
    pub epochs_per_round: usize,
    /// Dynamic rounds; defaults to the number of held-out classes.
    #[serde(default)]
    pub rounds: Option<usize>,
    #[serde(default)]
    pub ood_mode: OodMode,
    /// Master seed for model initialization, output expansion and
    /// learnability runs.
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn rounds(&self) -> usize {
        self.rounds.unwrap_or(self.split.held_out_classes.len())
    }

    /// Checks that need no data.
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.adam.validate()?;
        self.kmeans.validate()?;
        self.policy.validate()?;
        self.learnability.validate()?;
        if self.net.hidden_dims.is_empty() || self.net.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(
                "net.hidden_dims needs at least one layer, all widths >= 1".into(),
            ));
        }
        if let OodMode::Detector { quantile } = self.ood_mode {
            check_quantile(quantile)?;
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        let held = &self.split.held_out_classes;
        if held.is_empty() {
            return Err(Error::InvalidConfig("split.held_out_classes is empty; nothing to discover".into()));
        }
        if self.rounds() > held.len() {
            return Err(Error::InvalidConfig(format!(
                "rounds ({}) exceeds the number of held-out classes ({})",
                self.rounds(),
                held.len()
            )));
        }
        Ok(())
    }

    /// Checks against the loaded data: class ids, retained class count and
    /// that the pool can hold `k` clusters.
    pub fn validate_with_data(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        let split = data.make_split(&self.split)?;
        if split.n_classes_visible() < 2 {
            return Err(Error::InvalidConfig(format!(
                "only {} class would remain labeled; the learner needs at least 2",
                split.n_classes_visible()
            )));
        }
        let pool = split.unlabeled_indices().len();
        if self.kmeans.k > pool {
            return Err(Error::InvalidConfig(format!(
                "kmeans.k ({}) exceeds the OOD pool size ({pool})",
                self.kmeans.k
            )));
        }
        Ok(())
    }
}
