//! Which candidate cluster becomes a new class.
//!
//! Learnability trains a fresh classifier to tell the candidate clusters
//! apart and scores each cluster by its held-out recall: clusters that are
//! easy to learn are preferred. Density (mean distance to the centroid) and
//! uniform random choice are kept as baselines.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::sq_dist;
use crate::error::{Error, Result};
use crate::learner::{argmax_rows, init_model, AdamConfig, NetworkConfig};
use crate::seed;

/// Clusters smaller than this are not scored (learnability 0).
pub const MIN_SCORABLE_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeatures {
    pub cluster_id: usize,
    pub size: usize,
    pub learnability: f64,
    pub density: f64,
    /// False when the cluster was too small to score.
    pub scorable: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionPolicy {
    #[default]
    Learnability,
    Random {
        #[serde(default)]
        seed: u64,
    },
    Density,
    Threshold { min_accuracy: f64 },
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            SelectionPolicy::Threshold { min_accuracy } if !(0.0..=1.0).contains(min_accuracy) => {
                Err(Error::InvalidConfig(format!(
                    "threshold policy min_accuracy must be in [0, 1], got {min_accuracy}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// The policy with its random stream advanced to `round`.
    pub fn for_round(&self, round: u32) -> SelectionPolicy {
        match self {
            SelectionPolicy::Random { seed } => SelectionPolicy::Random {
                seed: seed::derive_seed(*seed, u64::from(round)),
            },
            other => other.clone(),
        }
    }
}

/// Feature space the learnability classifier is trained in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    #[default]
    Raw,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnabilityConfig {
    pub holdout_fraction: f64,
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    /// Lower bound on optimizer steps; small candidate sets get extra
    /// epochs until they reach it.
    pub min_steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub min_cluster_size: usize,
    /// Add the already labeled classes to the learnability problem as extra
    /// classes.
    pub include_existing: bool,
    pub feature_space: FeatureSpace,
}

impl Default for LearnabilityConfig {
    fn default() -> Self {
        LearnabilityConfig {
            holdout_fraction: 0.2,
            hidden_dims: vec![32],
            epochs: 5,
            min_steps: 500,
            learning_rate: 1e-3,
            batch_size: 64,
            min_cluster_size: MIN_SCORABLE_SIZE,
            include_existing: false,
            feature_space: FeatureSpace::Raw,
        }
    }
}

impl LearnabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "learnability.holdout_fraction must be in (0, 0.5], got {}",
                self.holdout_fraction
            )));
        }
        if self.min_cluster_size < 2 || self.batch_size == 0 || self.hidden_dims.is_empty() {
            return Err(Error::InvalidConfig(
                "learnability needs min_cluster_size >= 2, batch_size >= 1 and a hidden layer".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnabilityScore {
    pub cluster_id: usize,
    pub size: usize,
    pub accuracy: f64,
    pub scorable: bool,
}

pub fn learnability_scores(
    features: ArrayView2<f64>,
    assignments: &[usize],
    cfg: &LearnabilityConfig,
    seed: u64,
) -> Result<Vec<LearnabilityScore>> {
    learnability_scores_with_existing(features, assignments, None, cfg, seed)
}

/// Per-cluster learnability, ascending by cluster id.
///
/// Each scorable cluster is split into train and held-out parts (stratified,
/// `holdout_fraction` held out), a fresh network is trained on the union of
/// the training parts, and a cluster's score is the fraction of its held-out
/// members predicted as that cluster. Clusters are ordered internally by
/// their first member, so renaming cluster ids only renames the scores.
///
/// `existing` adds labeled samples as extra training classes; they are not
/// scored.
pub fn learnability_scores_with_existing(
    features: ArrayView2<f64>,
    assignments: &[usize],
    existing: Option<(ArrayView2<f64>, &[usize])>,
    cfg: &LearnabilityConfig,
    seed: u64,
) -> Result<Vec<LearnabilityScore>> {
    cfg.validate()?;
    if assignments.len() != features.nrows() {
        return Err(Error::ShapeMismatch {
            expected: features.nrows(),
            got: assignments.len(),
        });
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &a) in assignments.iter().enumerate() {
        members.entry(a).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::Degenerate("learnability needs at least 2 clusters".into()));
    }

    let mut scorable: Vec<(usize, &Vec<usize>)> = members
        .iter()
        .filter(|(_, m)| m.len() >= cfg.min_cluster_size)
        .map(|(&id, m)| (id, m))
        .collect();
    let extra_classes = existing.map_or(0, |(_, y)| y.iter().max().map_or(0, |m| m + 1));
    if scorable.len() + extra_classes < 2 {
        return Err(Error::Degenerate(format!(
            "fewer than 2 clusters with at least {} members",
            cfg.min_cluster_size
        )));
    }
    scorable.sort_by_key(|(_, m)| m[0]);

    let mut train_rows = Vec::new();
    let mut train_labels = Vec::new();
    let mut holdout: Vec<Vec<usize>> = Vec::with_capacity(scorable.len());
    for (class, (_, m)) in scorable.iter().enumerate() {
        let mut shuffled = (*m).clone();
        shuffled.shuffle(&mut seed::rng(seed::derive_seed(seed, class as u64)));
        let n_hold = ((m.len() as f64 * cfg.holdout_fraction).round() as usize).clamp(1, m.len() - 1);
        let (hold, train) = shuffled.split_at(n_hold);
        holdout.push(hold.to_vec());
        train_rows.extend_from_slice(train);
        train_labels.extend(std::iter::repeat_n(class, train.len()));
    }

    let mut x_train = features.select(Axis(0), &train_rows);
    if let Some((ex, ey)) = existing {
        if ex.ncols() != features.ncols() || ex.nrows() != ey.len() {
            return Err(Error::ShapeMismatch {
                expected: features.ncols(),
                got: ex.ncols(),
            });
        }
        x_train.append(Axis(0), ex).expect("same width");
        train_labels.extend(ey.iter().map(|&y| y + scorable.len()));
    }

    let net = NetworkConfig::new(
        features.ncols(),
        cfg.hidden_dims.clone(),
        (scorable.len() + extra_classes).max(2),
    );
    let model_seed = seed::derive_seed(seed, u64::MAX);
    let mut model = init_model(&net, model_seed)?;
    let adam = AdamConfig {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        seed: model_seed,
        ..AdamConfig::default()
    };
    let batches = train_labels.len().div_ceil(cfg.batch_size).max(1);
    let epochs = cfg.epochs.max(cfg.min_steps.div_ceil(batches));
    model.train_epochs(x_train.view(), &train_labels, &adam, epochs)?;

    let mut scores: BTreeMap<usize, LearnabilityScore> = members
        .iter()
        .map(|(&cluster_id, m)| {
            (
                cluster_id,
                LearnabilityScore {
                    cluster_id,
                    size: m.len(),
                    accuracy: 0.0,
                    scorable: false,
                },
            )
        })
        .collect();
    for (class, ((cluster_id, _), hold)) in scorable.iter().zip(&holdout).enumerate() {
        let predicted = argmax_rows(&model.predict_proba(features.select(Axis(0), hold).view())?);
        let hits = predicted.iter().filter(|&&p| p == class).count();
        let s = scores.get_mut(cluster_id).expect("cluster present");
        s.accuracy = hits as f64 / hold.len() as f64;
        s.scorable = true;
    }
    Ok(scores.into_values().collect())
}

/// Mean Euclidean distance of each cluster's members to its centroid (0 for
/// empty clusters).
pub fn density_score(points: ArrayView2<f64>, centroids: &Array2<f64>, assignments: &[usize]) -> Result<Vec<f64>> {
    if assignments.len() != points.nrows() {
        return Err(Error::ShapeMismatch {
            expected: points.nrows(),
            got: assignments.len(),
        });
    }
    if centroids.ncols() != points.ncols() {
        return Err(Error::ShapeMismatch {
            expected: points.ncols(),
            got: centroids.ncols(),
        });
    }
    let k = centroids.nrows();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (row, &a) in points.rows().into_iter().zip(assignments) {
        if a >= k {
            return Err(Error::LabelOutOfRange { label: a, classes: k });
        }
        let c = centroids.row(a);
        let d = match (row.as_slice(), c.as_slice()) {
            (Some(x), Some(c)) => sq_dist(x, c),
            _ => row.iter().zip(c.iter()).map(|(x, y)| (x - y) * (x - y)).sum(),
        };
        sums[a] += d.sqrt();
        counts[a] += 1;
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect())
}

/// Applies a policy. Single-choice policies return one cluster id; the
/// threshold policy returns every scorable cluster whose learnability
/// exceeds the threshold, ascending, possibly none.
///
/// Single-choice policies only consider scorable clusters.
pub fn select(features: &[ClusterFeatures], policy: &SelectionPolicy) -> Result<Vec<usize>> {
    if features.is_empty() {
        return Err(Error::Empty("no candidate clusters"));
    }
    policy.validate()?;
    let mut candidates: Vec<&ClusterFeatures> = features.iter().filter(|f| f.scorable).collect();
    candidates.sort_by_key(|f| f.cluster_id);
    if let SelectionPolicy::Threshold { min_accuracy } = policy {
        return Ok(candidates
            .iter()
            .filter(|f| f.learnability > *min_accuracy)
            .map(|f| f.cluster_id)
            .collect());
    }
    if candidates.is_empty() {
        return Err(Error::Degenerate("no scorable candidate clusters".into()));
    }
    let pick = match policy {
        SelectionPolicy::Learnability => candidates
            .iter()
            .copied()
            .reduce(|best, f| {
                let better = f.learnability > best.learnability
                    || (f.learnability == best.learnability && f.size > best.size);
                if better {
                    f
                } else {
                    best
                }
            })
            .expect("non-empty"),
        SelectionPolicy::Density => candidates
            .iter()
            .copied()
            .reduce(|best, f| if f.density < best.density { f } else { best })
            .expect("non-empty"),
        SelectionPolicy::Random { seed } => {
            let i = seed::rng(*seed).random_range(0..candidates.len());
            candidates[i]
        }
        SelectionPolicy::Threshold { .. } => unreachable!("handled above"),
    };
    Ok(vec![pick.cluster_id])
}
