//! Evaluation of discovered labels.
//!
//! Every discovered cluster is mapped to the ground-truth label it overlaps
//! most (plurality, lower label on ties; many clusters may share a label).
//! Dataset Reconstruction Accuracy (DRA) is then the fraction of all
//! training samples whose human or discovered label agrees with the truth:
//!
//! ```text
//! dra = (ell + o * sum_k w_k * a_k) / N,   N = ell + o
//! ```
//!
//! with `w_k` the cluster's share of the `o` clustered samples and `a_k` its
//! plurality accuracy. Since `o * w_k * a_k` is the cluster's plurality
//! count, the implementation sums those counts directly and the result is
//! exactly the per-sample indicator average.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOverlap {
    pub cluster_id: usize,
    pub label: usize,
    pub overlap: usize,
    pub size: usize,
    pub accuracy: f64,
    /// `size` over all samples covered by the mapping.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMapping {
    /// Non-empty clusters by ascending id.
    pub clusters: Vec<ClusterOverlap>,
    pub total: usize,
}

impl OverlapMapping {
    pub fn correct(&self) -> usize {
        self.clusters.iter().map(|c| c.overlap).sum()
    }

    /// Size-weighted mean accuracy, `sum_k w_k * a_k`.
    pub fn weighted_accuracy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.correct() as f64 / self.total as f64
    }

    pub fn get(&self, cluster_id: usize) -> Option<&ClusterOverlap> {
        self.clusters.iter().find(|c| c.cluster_id == cluster_id)
    }
}

/// Plurality label (lowest on ties) and its count.
pub fn plurality<'a>(labels: impl IntoIterator<Item = &'a usize>) -> Option<(usize, usize)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts
        .into_iter()
        .fold(None, |best, (label, n)| match best {
            Some((_, b)) if n <= b => best,
            _ => Some((label, n)),
        })
}

pub fn cluster_accuracy(assignments: &[usize], true_labels: &[usize]) -> Result<OverlapMapping> {
    if assignments.len() != true_labels.len() {
        return Err(Error::ShapeMismatch {
            expected: assignments.len(),
            got: true_labels.len(),
        });
    }
    if assignments.is_empty() {
        return Err(Error::Empty("no clustered samples"));
    }
    let mut by_cluster: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&a, &y) in assignments.iter().zip(true_labels) {
        by_cluster.entry(a).or_default().push(y);
    }
    let total = assignments.len();
    let clusters = by_cluster
        .into_iter()
        .map(|(cluster_id, ys)| {
            let (label, overlap) = plurality(&ys).expect("cluster has members");
            ClusterOverlap {
                cluster_id,
                label,
                overlap,
                size: ys.len(),
                accuracy: overlap as f64 / ys.len() as f64,
                weight: ys.len() as f64 / total as f64,
            }
        })
        .collect();
    Ok(OverlapMapping { clusters, total })
}

/// A cluster accepted as a class earlier in a run; it keeps the plurality
/// label it had when accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenCluster {
    pub members: Vec<usize>,
    pub label: usize,
}

/// Everything needed to score a labeling of a training set. Sample ids index
/// `true_labels`.
#[derive(Debug, Clone, Copy)]
pub struct ReconstructionInput<'a> {
    /// Number of human-labeled samples (always correct).
    pub ell: usize,
    /// Samples routed into an existing class: `(sample, true class the
    /// assigned label stands for)`.
    pub routed: &'a [(usize, usize)],
    /// Current OOD pool and its cluster assignment.
    pub pool: &'a [usize],
    pub pool_assignments: &'a [usize],
    pub frozen: &'a [FrozenCluster],
    pub true_labels: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    /// `frozen:<i>` for accepted clusters, `pool:<id>` for clusters of the
    /// current pool.
    pub name: String,
    pub label: usize,
    pub size: usize,
    pub overlap: usize,
    pub accuracy: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub ell: usize,
    pub routed: usize,
    pub routed_correct: usize,
    /// Clustered samples: frozen members plus the current pool.
    pub o: usize,
    pub n: usize,
    /// `sum_k w_k * a_k` over frozen and pool clusters.
    pub weighted_ood_accuracy: f64,
    /// Same, over the current pool's clusters only.
    pub pool_cluster_accuracy: f64,
    pub dra: f64,
    pub clusters: Vec<ClusterScore>,
}

impl ReconstructionReport {
    /// The closed-form expression evaluated from the report's own fields.
    pub fn formula_dra(&self) -> f64 {
        let w: Vec<f64> = self.clusters.iter().map(|c| c.weight).collect();
        let a: Vec<f64> = self.clusters.iter().map(|c| c.accuracy).collect();
        (reconstruction_formula(self.ell, self.o, &w, &a) * (self.ell + self.o) as f64
            + self.routed_correct as f64)
            / self.n as f64
    }
}

/// `(ell + o * sum_k w_k a_k) / (ell + o)`, evaluated as written.
pub fn reconstruction_formula(ell: usize, o: usize, weights: &[f64], accuracies: &[f64]) -> f64 {
    let n = ell + o;
    if n == 0 {
        return 1.0;
    }
    let s: f64 = weights.iter().zip(accuracies).map(|(w, a)| w * a).sum();
    (ell as f64 + o as f64 * s) / n as f64
}

pub fn dataset_reconstruction_accuracy(input: &ReconstructionInput<'_>) -> Result<ReconstructionReport> {
    if input.pool.len() != input.pool_assignments.len() {
        return Err(Error::ShapeMismatch {
            expected: input.pool.len(),
            got: input.pool_assignments.len(),
        });
    }
    let label_of = |i: usize| -> Result<usize> {
        input.true_labels.get(i).copied().ok_or(Error::IndexOutOfRange {
            index: i,
            len: input.true_labels.len(),
        })
    };

    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut clusters = Vec::new();
    for (f, frozen) in input.frozen.iter().enumerate() {
        let mut overlap = 0;
        for &m in &frozen.members {
            if !seen.insert(m) {
                return Err(Error::Overlap(m));
            }
            if label_of(m)? == frozen.label {
                overlap += 1;
            }
        }
        clusters.push((format!("frozen:{f}"), frozen.label, frozen.members.len(), overlap));
    }
    let frozen_count = seen.len();

    let mut pool_labels = Vec::with_capacity(input.pool.len());
    for &i in input.pool {
        if !seen.insert(i) {
            return Err(Error::Overlap(i));
        }
        pool_labels.push(label_of(i)?);
    }
    let pool_mapping = if input.pool.is_empty() {
        None
    } else {
        Some(cluster_accuracy(input.pool_assignments, &pool_labels)?)
    };
    if let Some(m) = &pool_mapping {
        for c in &m.clusters {
            clusters.push((format!("pool:{}", c.cluster_id), c.label, c.size, c.overlap));
        }
    }

    let mut routed_correct = 0;
    for &(i, class) in input.routed {
        if label_of(i)? == class {
            routed_correct += 1;
        }
    }

    let o = frozen_count + input.pool.len();
    let n = input.ell + input.routed.len() + o;
    if n == 0 {
        return Err(Error::Empty("no samples to evaluate"));
    }
    let clustered_correct: usize = clusters.iter().map(|c| c.3).sum();
    let correct = input.ell + routed_correct + clustered_correct;

    Ok(ReconstructionReport {
        ell: input.ell,
        routed: input.routed.len(),
        routed_correct,
        o,
        n,
        weighted_ood_accuracy: if o == 0 { 1.0 } else { clustered_correct as f64 / o as f64 },
        pool_cluster_accuracy: pool_mapping.as_ref().map_or(1.0, OverlapMapping::weighted_accuracy),
        dra: correct as f64 / n as f64,
        clusters: clusters
            .into_iter()
            .map(|(name, label, size, overlap)| ClusterScore {
                name,
                label,
                size,
                overlap,
                accuracy: overlap as f64 / size as f64,
                weight: size as f64 / o as f64,
            })
            .collect(),
    })
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization. Zero
/// when either side has a single group.
pub fn nmi(assignments: &[usize], true_labels: &[usize]) -> Result<f64> {
    if assignments.len() != true_labels.len() {
        return Err(Error::ShapeMismatch {
            expected: assignments.len(),
            got: true_labels.len(),
        });
    }
    if assignments.is_empty() {
        return Err(Error::Empty("no samples"));
    }
    let n = assignments.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut a_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut b_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (&a, &b) in assignments.iter().zip(true_labels) {
        *joint.entry((a, b)).or_default() += 1;
        *a_counts.entry(a).or_default() += 1;
        *b_counts.entry(b).or_default() += 1;
    }
    let ha = entropy(a_counts.values().copied(), n);
    let hb = entropy(b_counts.values().copied(), n);
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &c)| {
            let pab = c as f64 / n;
            let pa = a_counts[&a] as f64 / n;
            let pb = b_counts[&b] as f64 / n;
            pab * (pab / (pa * pb)).ln()
        })
        .sum();
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_percent_cluster() {
        let labels = [9, 9, 9, 9, 9, 9, 7, 7, 7, 7];
        let m = cluster_accuracy(&[0; 10], &labels).unwrap();
        assert_eq!(m.clusters[0].label, 9);
        assert_eq!(m.clusters[0].accuracy, 0.6);
    }

    #[test]
    fn plurality_ties_go_to_lower_label() {
        let m = cluster_accuracy(&[3, 3, 3, 3], &[5, 2, 5, 2]).unwrap();
        assert_eq!(m.clusters[0].label, 2);
        assert_eq!(m.clusters[0].accuracy, 0.5);
        assert_eq!(m.clusters[0].cluster_id, 3);
    }

    #[test]
    fn pure_clusters_and_errors() {
        let m = cluster_accuracy(&[0, 0, 1], &[4, 4, 2]).unwrap();
        assert!(m.clusters.iter().all(|c| c.accuracy == 1.0));
        assert!(cluster_accuracy(&[], &[]).is_err());
        assert!(cluster_accuracy(&[0], &[]).is_err());
    }

    #[test]
    fn formula_spot_check() {
        let dra = reconstruction_formula(80, 20, &[0.5, 0.5], &[0.6, 0.8]);
        assert!((dra - 0.94).abs() < 1e-12);
    }

    #[test]
    fn empty_pool_is_perfect() {
        let labels = vec![0; 5];
        let r = dataset_reconstruction_accuracy(&ReconstructionInput {
            ell: 5,
            routed: &[],
            pool: &[],
            pool_assignments: &[],
            frozen: &[],
            true_labels: &labels,
        })
        .unwrap();
        assert_eq!(r.dra, 1.0);
        assert_eq!(r.o, 0);
    }

    #[test]
    fn frozen_and_pool_overlap_rejected() {
        let labels = vec![0, 1, 1, 0];
        let frozen = [FrozenCluster { members: vec![1, 2], label: 1 }];
        let err = dataset_reconstruction_accuracy(&ReconstructionInput {
            ell: 0,
            routed: &[],
            pool: &[2, 3],
            pool_assignments: &[0, 0],
            frozen: &frozen,
            true_labels: &labels,
        })
        .unwrap_err();
        assert!(matches!(err, Error::Overlap(2)));
    }

    #[test]
    fn frozen_clusters_use_their_own_label() {
        // frozen cluster labeled 1 but members are mostly 0: accuracy 1/3
        let labels = vec![0, 0, 1, 2, 2];
        let frozen = [FrozenCluster { members: vec![0, 1, 2], label: 1 }];
        let r = dataset_reconstruction_accuracy(&ReconstructionInput {
            ell: 5,
            routed: &[],
            pool: &[3, 4],
            pool_assignments: &[0, 0],
            frozen: &frozen,
            true_labels: &labels,
        })
        .unwrap();
        assert_eq!(r.o, 5);
        assert_eq!(r.dra, (5.0 + 1.0 + 2.0) / 10.0);
        assert!((r.formula_dra() - r.dra).abs() < 1e-12);
    }

    #[test]
    fn routed_samples_count_when_correct() {
        let labels = vec![0, 1, 1];
        let r = dataset_reconstruction_accuracy(&ReconstructionInput {
            ell: 1,
            routed: &[(1, 1), (2, 0)],
            pool: &[],
            pool_assignments: &[],
            frozen: &[],
            true_labels: &labels,
        })
        .unwrap();
        assert_eq!(r.n, 3);
        assert_eq!(r.dra, 2.0 / 3.0);
    }

    #[test]
    fn nmi_edges() {
        assert!((nmi(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 4]).unwrap() - 1.0).abs() < 1e-12);
        // product construction: every cluster holds every label equally
        let a = [0, 0, 1, 1];
        let b = [0, 1, 0, 1];
        assert!(nmi(&a, &b).unwrap().abs() < 1e-9);
        assert_eq!(nmi(&[0, 0, 0], &[1, 2, 3]).unwrap(), 0.0);
        assert!(nmi(&[0], &[]).is_err());
    }
}
