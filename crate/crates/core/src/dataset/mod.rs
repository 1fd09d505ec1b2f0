//! Labeled datasets with per-sample label provenance.
//!
//! A [`Dataset`] holds the feature matrix, the labels the learner may see,
//! the hidden ground truth used only for evaluation, and where each visible
//! label came from. All mutating operations return a new value; the feature
//! matrix is shared between versions.

mod csv;
mod idx;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use self::csv::load_csv;
pub use self::idx::load_idx;
pub use self::synth::{synth_gaussian, GaussianMixtureSpec};

use crate::error::{Error, Result};
use crate::seed;

/// Where a sample's current label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    /// Label supplied with the data.
    Human,
    /// Incoming sample routed into an existing class (by the oracle or the
    /// OOD detector).
    Routed,
    /// Label created by class discovery in the given round.
    Discovered { round: u32 },
    /// No label: member of the out-of-distribution pool.
    Unlabeled,
}

/// What a visible class index stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LabelOrigin {
    /// An original class of the source data, by its ground-truth id.
    Original { class: usize },
    Discovered { round: u32 },
}

/// How to strip labels from a fully labeled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// Ground-truth classes whose labels are removed.
    pub held_out_classes: Vec<usize>,
    /// Keep at most this many samples of every class (held-out ones too).
    #[serde(default)]
    pub per_class_cap: Option<usize>,
    /// Fraction of each retained class whose labels are also removed, so that
    /// the unlabeled stream contains in-distribution samples for the OOD
    /// detector to route.
    #[serde(default)]
    pub incoming_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SplitSpec {
    pub fn holding_out(classes: impl IntoIterator<Item = usize>) -> Self {
        SplitSpec {
            held_out_classes: classes.into_iter().collect(),
            per_class_cap: None,
            incoming_fraction: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_class_cap == Some(0) {
            return Err(Error::InvalidConfig("split.per_class_cap must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.incoming_fraction) {
            return Err(Error::InvalidConfig(format!(
                "split.incoming_fraction must be in [0, 1), got {}",
                self.incoming_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Arc<Array2<f64>>,
    labels: Vec<Option<usize>>,
    true_labels: Arc<Vec<usize>>,
    provenance: Vec<Provenance>,
    label_origin: Vec<LabelOrigin>,
}

impl Dataset {
    /// A fully labeled dataset whose visible labels are the ground truth.
    pub fn new(features: Array2<f64>, true_labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != true_labels.len() {
            return Err(Error::ShapeMismatch {
                expected: features.nrows(),
                got: true_labels.len(),
            });
        }
        let n_classes = true_labels.iter().max().map_or(0, |&m| m + 1);
        Ok(Dataset {
            labels: true_labels.iter().map(|&y| Some(y)).collect(),
            provenance: vec![Provenance::Human; true_labels.len()],
            label_origin: (0..n_classes).map(|class| LabelOrigin::Original { class }).collect(),
            features: Arc::new(features.as_standard_layout().into_owned()),
            true_labels: Arc::new(true_labels),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn true_labels(&self) -> &[usize] {
        &self.true_labels
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Number of classes the model may currently train on.
    pub fn n_classes_visible(&self) -> usize {
        self.label_origin.len()
    }

    pub fn label_origin(&self) -> &[LabelOrigin] {
        &self.label_origin
    }

    /// Distinct ground-truth classes, ascending.
    pub fn true_classes(&self) -> Vec<usize> {
        self.true_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.labels[i].is_some()).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.labels[i].is_none()).collect()
    }

    /// Indices and labels of every labeled sample.
    pub fn labeled(&self) -> (Vec<usize>, Vec<usize>) {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| (i, l)))
            .unzip()
    }

    pub fn count_with(&self, pred: impl Fn(Provenance) -> bool) -> usize {
        self.provenance.iter().filter(|&&p| pred(p)).count()
    }

    /// Copies the given rows into a new matrix.
    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), indices)
    }

    /// Restricts the dataset to samples of the given ground-truth classes and
    /// resets every label to the ground truth.
    pub fn select_classes(&self, classes: &[usize]) -> Result<Dataset> {
        let keep: BTreeSet<usize> = classes.iter().copied().collect();
        let present: BTreeSet<usize> = self.true_classes().into_iter().collect();
        if let Some(missing) = keep.difference(&present).next() {
            return Err(Error::InvalidConfig(format!("class {missing} does not exist in the data")));
        }
        let rows: Vec<usize> = (0..self.n_samples())
            .filter(|&i| keep.contains(&self.true_labels[i]))
            .collect();
        let labels = rows.iter().map(|&i| self.true_labels[i]).collect();
        Dataset::new(self.rows(&rows), labels)
    }

    /// Removes the labels of the held-out classes (and, optionally, of a
    /// fraction of the retained ones) and remaps the retained classes onto a
    /// dense `0..n_classes_visible` range, ascending by original class id.
    ///
    /// Decisions are made from the ground truth, so this is meant to be
    /// applied to freshly loaded data.
    pub fn make_split(&self, spec: &SplitSpec) -> Result<Dataset> {
        spec.validate()?;
        let classes = self.true_classes();
        let held: BTreeSet<usize> = spec.held_out_classes.iter().copied().collect();
        if let Some(&c) = held.iter().find(|c| classes.binary_search(c).is_err()) {
            return Err(Error::InvalidConfig(format!(
                "held-out class {c} does not exist in the data"
            )));
        }
        if !classes.is_empty() && held.len() == classes.len() {
            return Err(Error::InvalidConfig(
                "held_out_classes covers every class; nothing is left to train on".into(),
            ));
        }

        let mut rng = seed::rng(spec.seed);
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &y) in self.true_labels.iter().enumerate() {
            by_class.entry(y).or_default().push(i);
        }
        if let Some(cap) = spec.per_class_cap {
            for members in by_class.values_mut() {
                if members.len() > cap {
                    members.shuffle(&mut rng);
                    members.truncate(cap);
                    members.sort_unstable();
                }
            }
        }

        let retained: Vec<usize> = classes.iter().copied().filter(|c| !held.contains(c)).collect();
        let mut stripped: BTreeSet<usize> = BTreeSet::new();
        if spec.incoming_fraction > 0.0 {
            for class in &retained {
                let mut members = by_class[class].clone();
                let n_strip = (members.len() as f64 * spec.incoming_fraction).round() as usize;
                members.shuffle(&mut rng);
                stripped.extend(members.into_iter().take(n_strip));
            }
        }

        let mut rows: Vec<usize> = by_class.values().flatten().copied().collect();
        rows.sort_unstable();
        let dense: BTreeMap<usize, usize> =
            retained.iter().enumerate().map(|(dense, &orig)| (orig, dense)).collect();

        let mut labels = Vec::with_capacity(rows.len());
        let mut provenance = Vec::with_capacity(rows.len());
        let mut true_labels = Vec::with_capacity(rows.len());
        for &i in &rows {
            let y = self.true_labels[i];
            true_labels.push(y);
            match dense.get(&y) {
                Some(&d) if !stripped.contains(&i) => {
                    labels.push(Some(d));
                    provenance.push(Provenance::Human);
                }
                _ => {
                    labels.push(None);
                    provenance.push(Provenance::Unlabeled);
                }
            }
        }

        let features = if rows.len() == self.n_samples() {
            Arc::clone(&self.features)
        } else {
            Arc::new(self.rows(&rows))
        };
        Ok(Dataset {
            features,
            labels,
            true_labels: Arc::new(true_labels),
            provenance,
            label_origin: retained.iter().map(|&class| LabelOrigin::Original { class }).collect(),
        })
    }

    /// Gives every member a new class label `n_classes_visible` discovered in
    /// `round`.
    pub fn add_class(&self, members: &[usize], round: u32) -> Result<Dataset> {
        if members.is_empty() {
            return Err(Error::Empty("new class has no members"));
        }
        let mut out = self.clone();
        let label = self.n_classes_visible();
        for &i in members {
            if i >= self.n_samples() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.n_samples(),
                });
            }
            if out.labels[i].is_some() {
                return Err(Error::AlreadyLabeled(i));
            }
            out.labels[i] = Some(label);
            out.provenance[i] = Provenance::Discovered { round };
        }
        out.label_origin.push(LabelOrigin::Discovered { round });
        Ok(out)
    }

    /// Labels unlabeled samples with existing classes (in-distribution routing).
    pub fn assign_routed(&self, routed: &[(usize, usize)]) -> Result<Dataset> {
        let mut out = self.clone();
        for &(i, label) in routed {
            if i >= self.n_samples() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.n_samples(),
                });
            }
            if label >= self.n_classes_visible() {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: self.n_classes_visible(),
                });
            }
            if out.labels[i].is_some() {
                return Err(Error::AlreadyLabeled(i));
            }
            out.labels[i] = Some(label);
            out.provenance[i] = Provenance::Routed;
        }
        Ok(out)
    }
}
