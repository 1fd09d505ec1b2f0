//! Discovery loops.
//!
//! Both loops start the same way: split the data, train the learner on the
//! labeled classes, and route the unlabeled samples either into existing
//! classes or into the OOD pool. Static discovery then clusters the pool
//! once and labels every cluster. Dynamic discovery accepts one cluster per
//! round (by the selection policy), widens the classifier, retrains on all
//! labeled data and re-clusters what is left.
//!
//! Evaluation after every round treats accepted clusters as frozen (they
//! keep the plurality label they had when accepted) and re-clusters the
//! residual pool with `kmeans.k` clusters.

mod config;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use self::config::{load_data, DataSource, ExperimentConfig, NetSpec, OodMode};

use crate::clustering::{fit_with_restarts, Clustering, KMeansConfig};
use crate::dataset::{Dataset, LabelOrigin, Provenance};
use crate::error::{Error, Result};
use crate::learner::{init_model, Model, NetworkConfig};
use crate::metrics::{dataset_reconstruction_accuracy, nmi, plurality, FrozenCluster, ReconstructionInput, ReconstructionReport};
use crate::ood::OodDetector;
use crate::seed::derive_seed;
use crate::selection::{
    density_score, learnability_scores_with_existing, select, ClusterFeatures, FeatureSpace, SelectionPolicy,
};

const MODEL_STREAM: u64 = 1;
const EXPAND_STREAM: u64 = 1 << 20;
const LEARNABILITY_STREAM: u64 = 2 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedCluster {
    pub round: u32,
    pub members: Vec<usize>,
    /// Ground-truth plurality label when accepted (evaluation only).
    pub plurality_label: usize,
    pub purity: f64,
    pub learnability: Option<f64>,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    #[serde(flatten)]
    pub features: ClusterFeatures,
    /// Plurality accuracy against the ground truth.
    pub cluster_accuracy: f64,
    pub plurality_label: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub dra: f64,
    /// Size-weighted plurality accuracy over frozen and pool clusters.
    pub mean_cluster_accuracy: f64,
    pub ood_pool_size: usize,
    /// Mean loss of the last training epoch of this round.
    pub train_loss: Option<f64>,
    pub pool_nmi: Option<f64>,
    /// Clusters scored for acceptance in this round.
    pub candidates: Vec<CandidateRecord>,
    pub report: ReconstructionReport,
}

#[derive(Debug, Clone)]
pub struct DiscoveryState {
    pub dataset: Dataset,
    pub model: Model,
    pub round: u32,
    /// Sample ids still waiting for a class.
    pub pool: Vec<usize>,
    /// Incoming samples routed into existing classes, with the ground-truth
    /// class their label stands for.
    pub routed: Vec<(usize, usize)>,
    pub accepted: Vec<AcceptedCluster>,
    pub history: Vec<RoundRecord>,
    pub detector: Option<OodDetector>,
    pub early_stop: Option<String>,
}

/// Seeds of every random stream of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRegistry {
    pub master: u64,
    pub split: u64,
    pub adam: u64,
    pub kmeans: u64,
    pub model_init: u64,
    pub policy: Option<u64>,
    pub synthetic_data: Option<u64>,
}

impl SeedRegistry {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        SeedRegistry {
            master: cfg.seed,
            split: cfg.split.seed,
            adam: cfg.adam.seed,
            kmeans: cfg.kmeans.seed,
            model_init: derive_seed(cfg.seed, MODEL_STREAM),
            policy: match cfg.policy {
                SelectionPolicy::Random { seed } => Some(seed),
                _ => None,
            },
            synthetic_data: match &cfg.data {
                DataSource::Synthetic(spec) => Some(spec.seed),
                _ => None,
            },
        }
    }
}

fn human_count(dataset: &Dataset) -> usize {
    dataset.count_with(|p| p == Provenance::Human)
}

fn train_labeled(state: &mut DiscoveryState, cfg: &ExperimentConfig, epochs: usize) -> Result<Option<f64>> {
    if epochs == 0 {
        return Ok(None);
    }
    let (idx, labels) = state.dataset.labeled();
    let x = state.dataset.rows(&idx);
    let losses = state.model.train_epochs(x.view(), &labels, &cfg.adam, epochs)?;
    Ok(losses.last().copied())
}

/// Split, initial training and routing of the unlabeled samples.
pub fn prepare(cfg: &ExperimentConfig, data: &Dataset) -> Result<(DiscoveryState, Option<f64>)> {
    cfg.validate()?;
    let dataset = data.make_split(&cfg.split)?;
    let net = NetworkConfig::new(dataset.n_features(), cfg.net.hidden_dims.clone(), dataset.n_classes_visible());
    let model = init_model(&net, derive_seed(cfg.seed, MODEL_STREAM))?;
    let mut state = DiscoveryState {
        dataset,
        model,
        round: 0,
        pool: Vec::new(),
        routed: Vec::new(),
        accepted: Vec::new(),
        history: Vec::new(),
        detector: None,
        early_stop: None,
    };
    let loss = train_labeled(&mut state, cfg, cfg.epochs_initial)?;

    let incoming = state.dataset.unlabeled_indices();
    let origin_class = |label: usize, ds: &Dataset| match ds.label_origin()[label] {
        LabelOrigin::Original { class } => class,
        LabelOrigin::Discovered { .. } => unreachable!("no discovered classes before routing"),
    };
    let routed: Vec<(usize, usize)> = match cfg.ood_mode {
        OodMode::Oracle => {
            let dense: std::collections::BTreeMap<usize, usize> = (0..state.dataset.n_classes_visible())
                .map(|l| (origin_class(l, &state.dataset), l))
                .collect();
            let mut routed = Vec::new();
            for &i in &incoming {
                match dense.get(&state.dataset.true_labels()[i]) {
                    Some(&label) => routed.push((i, label)),
                    None => state.pool.push(i),
                }
            }
            routed
        }
        OodMode::Detector { quantile } => {
            let (labeled, _) = state.dataset.labeled();
            let detector = OodDetector::calibrate(&state.model, state.dataset.rows(&labeled).view(), quantile)?;
            let part = detector.partition(&state.model, state.dataset.rows(&incoming).view(), &incoming)?;
            state.detector = Some(detector);
            state.pool = part.ood;
            part.in_distribution
        }
    };
    if !routed.is_empty() {
        state.dataset = state.dataset.assign_routed(&routed)?;
    }
    state.routed = routed
        .into_iter()
        .map(|(i, label)| (i, origin_class(label, &state.dataset)))
        .collect();
    Ok((state, loss))
}

/// k-means settings for the evaluation clustering of `round`.
pub fn round_kmeans(cfg: &ExperimentConfig, round: u32, pool_size: usize) -> KMeansConfig {
    KMeansConfig {
        k: cfg.kmeans.k.min(pool_size),
        seed: derive_seed(cfg.kmeans.seed, u64::from(round)),
        ..cfg.kmeans.clone()
    }
}

struct Evaluation {
    report: ReconstructionReport,
    embeddings: Option<Array2<f64>>,
    clustering: Option<Clustering>,
    pool_nmi: Option<f64>,
}

fn frozen(accepted: &[AcceptedCluster]) -> Vec<FrozenCluster> {
    accepted
        .iter()
        .map(|a| FrozenCluster {
            members: a.members.clone(),
            label: a.plurality_label,
        })
        .collect()
}

fn evaluate(state: &DiscoveryState, cfg: &ExperimentConfig) -> Result<Evaluation> {
    let true_labels = state.dataset.true_labels();
    let (embeddings, clustering) = if state.pool.is_empty() {
        (None, None)
    } else {
        let emb = state.model.embed(state.dataset.rows(&state.pool).view())?;
        let c = fit_with_restarts(emb.view(), &round_kmeans(cfg, state.round, state.pool.len()))?;
        (Some(emb), Some(c))
    };
    let assignments = clustering.as_ref().map_or(&[][..], |c| &c.assignments[..]);
    let frozen = frozen(&state.accepted);
    let report = dataset_reconstruction_accuracy(&ReconstructionInput {
        ell: human_count(&state.dataset),
        routed: &state.routed,
        pool: &state.pool,
        pool_assignments: assignments,
        frozen: &frozen,
        true_labels,
    })?;
    let pool_nmi = match &clustering {
        Some(c) => {
            let ys: Vec<usize> = state.pool.iter().map(|&i| true_labels[i]).collect();
            Some(nmi(&c.assignments, &ys)?)
        }
        None => None,
    };
    Ok(Evaluation {
        report,
        embeddings,
        clustering,
        pool_nmi,
    })
}

/// Reconstruction accuracy of the state: frozen accepted clusters plus a
/// fresh clustering of the residual pool with the current model.
pub fn evaluate_state(state: &DiscoveryState, cfg: &ExperimentConfig) -> Result<ReconstructionReport> {
    Ok(evaluate(state, cfg)?.report)
}

fn record(round: u32, eval: &Evaluation, pool_size: usize, train_loss: Option<f64>, candidates: Vec<CandidateRecord>) -> RoundRecord {
    RoundRecord {
        round,
        dra: eval.report.dra,
        mean_cluster_accuracy: eval.report.weighted_ood_accuracy,
        ood_pool_size: pool_size,
        train_loss,
        pool_nmi: eval.pool_nmi,
        candidates,
        report: eval.report.clone(),
    }
}

fn cluster_members(state: &DiscoveryState, clustering: &Clustering) -> Vec<Vec<usize>> {
    clustering
        .members()
        .into_iter()
        .map(|m| m.into_iter().map(|i| state.pool[i]).collect())
        .collect()
}

fn accept(state: &mut DiscoveryState, members: Vec<usize>, round: u32, learnability: Option<f64>) -> Result<()> {
    state.dataset = state.dataset.add_class(&members, round)?;
    let truth = state.dataset.true_labels();
    let (label, overlap) = plurality(members.iter().map(|&i| &truth[i])).expect("non-empty cluster");
    state.accepted.push(AcceptedCluster {
        round,
        purity: overlap as f64 / members.len() as f64,
        size: members.len(),
        plurality_label: label,
        learnability,
        members,
    });
    Ok(())
}

/// Clusters the whole OOD pool once and labels every cluster as a new class.
/// With `epochs_initial = 0` this is the random-embedding baseline.
pub fn run_static(cfg: &ExperimentConfig, data: &Dataset) -> Result<(DiscoveryState, ReconstructionReport)> {
    let (mut state, loss) = prepare(cfg, data)?;
    if state.pool.is_empty() {
        return Err(Error::Empty("OOD pool"));
    }
    let eval = evaluate(&state, cfg)?;
    state.history.push(record(0, &eval, state.pool.len(), loss, Vec::new()));
    let clustering = eval.clustering.expect("non-empty pool is clustered");
    for members in cluster_members(&state, &clustering) {
        if !members.is_empty() {
            accept(&mut state, members, 1, None)?;
        }
    }
    state.pool.clear();
    Ok((state, eval.report))
}

fn candidates(
    state: &DiscoveryState,
    cfg: &ExperimentConfig,
    embeddings: &Array2<f64>,
    clustering: &Clustering,
    round: u32,
) -> Result<Vec<ClusterFeatures>> {
    let model = &state.model;
    let space = |idx: &[usize]| -> Result<Array2<f64>> {
        let raw = state.dataset.rows(idx);
        match cfg.learnability.feature_space {
            FeatureSpace::Raw => Ok(raw),
            FeatureSpace::Embedding => model.embed(raw.view()),
        }
    };
    let pool_x = match cfg.learnability.feature_space {
        FeatureSpace::Raw => state.dataset.rows(&state.pool),
        FeatureSpace::Embedding => embeddings.clone(),
    };
    let existing = if cfg.learnability.include_existing {
        let (idx, labels) = state.dataset.labeled();
        Some((space(&idx)?, labels))
    } else {
        None
    };
    let scores = learnability_scores_with_existing(
        pool_x.view(),
        &clustering.assignments,
        existing.as_ref().map(|(x, y)| (x.view(), &y[..])),
        &cfg.learnability,
        derive_seed(cfg.seed, LEARNABILITY_STREAM + u64::from(round)),
    )?;
    let density = density_score(embeddings.view(), &clustering.centroids, &clustering.assignments)?;
    Ok(scores
        .into_iter()
        .map(|s| ClusterFeatures {
            cluster_id: s.cluster_id,
            size: s.size,
            learnability: s.accuracy,
            density: density[s.cluster_id],
            scorable: s.scorable,
        })
        .collect())
}

/// One cluster (or, for the threshold policy, every passing cluster) per
/// round until `rounds` rounds have run or the pool runs dry. The history
/// holds the round-0 evaluation plus one record per completed round.
pub fn run_dynamic(cfg: &ExperimentConfig, data: &Dataset) -> Result<(DiscoveryState, Vec<ReconstructionReport>)> {
    let (mut state, loss) = prepare(cfg, data)?;
    if state.pool.is_empty() {
        return Err(Error::Empty("OOD pool"));
    }
    let mut eval = evaluate(&state, cfg)?;
    state.history.push(record(0, &eval, state.pool.len(), loss, Vec::new()));
    let min_pool = 2 * cfg.learnability.min_cluster_size;

    for round in 1..=cfg.rounds() as u32 {
        let (Some(emb), Some(clustering)) = (&eval.embeddings, &eval.clustering) else {
            state.early_stop = Some(format!("round {round}: OOD pool is empty"));
            break;
        };
        if state.pool.len() < min_pool {
            state.early_stop = Some(format!(
                "round {round}: OOD pool has {} samples, fewer than {min_pool}",
                state.pool.len()
            ));
            break;
        }
        let features = match candidates(&state, cfg, emb, clustering, round) {
            Ok(f) => f,
            Err(Error::Degenerate(why)) => {
                state.early_stop = Some(format!("round {round}: {why}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let chosen = match select(&features, &cfg.policy.for_round(round)) {
            Ok(c) if c.is_empty() => {
                state.early_stop = Some(format!("round {round}: no cluster passed the acceptance policy"));
                break;
            }
            Ok(c) => c,
            Err(Error::Degenerate(why)) => {
                state.early_stop = Some(format!("round {round}: {why}"));
                break;
            }
            Err(e) => return Err(e),
        };

        let members = cluster_members(&state, clustering);
        let truth: Vec<usize> = state.pool.iter().map(|&i| state.dataset.true_labels()[i]).collect();
        let mapping = crate::metrics::cluster_accuracy(&clustering.assignments, &truth)?;
        let table: Vec<CandidateRecord> = features
            .iter()
            .map(|f| {
                let overlap = mapping.get(f.cluster_id).expect("scored clusters are non-empty");
                CandidateRecord {
                    features: f.clone(),
                    cluster_accuracy: overlap.accuracy,
                    plurality_label: overlap.label,
                    accepted: chosen.contains(&f.cluster_id),
                }
            })
            .collect();

        let mut taken = std::collections::BTreeSet::new();
        for &id in &chosen {
            let learn = features.iter().find(|f| f.cluster_id == id).map(|f| f.learnability);
            taken.extend(members[id].iter().copied());
            accept(&mut state, members[id].clone(), round, learn)?;
            let classes = state.dataset.n_classes_visible();
            state
                .model
                .expand_outputs(classes, derive_seed(cfg.seed, EXPAND_STREAM + (u64::from(round) << 8) + id as u64))?;
        }
        state.pool.retain(|i| !taken.contains(i));
        state.round = round;
        let loss = train_labeled(&mut state, cfg, cfg.epochs_per_round)?;

        eval = evaluate(&state, cfg)?;
        state.history.push(record(round, &eval, state.pool.len(), loss, table));
    }
    let reports = state.history.iter().map(|r| r.report.clone()).collect();
    Ok((state, reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCountRow {
    pub class_count: usize,
    /// Size-weighted plurality accuracy of the pool clusters.
    pub cluster_accuracy: f64,
    pub dra: f64,
}

/// Trains on the first `c` classes outside `eval_held_out` for every `c`
/// and clusters the fixed pool of `eval_held_out` classes.
pub fn run_class_count_experiment(
    base: &ExperimentConfig,
    data: &Dataset,
    class_counts: &[usize],
    eval_held_out: &[usize],
) -> Result<Vec<ClassCountRow>> {
    let eval: std::collections::BTreeSet<usize> = eval_held_out.iter().copied().collect();
    if eval.is_empty() {
        return Err(Error::InvalidConfig("class-count experiment needs held-out classes".into()));
    }
    let classes = data.true_classes();
    if let Some(c) = eval.iter().find(|c| classes.binary_search(c).is_err()) {
        return Err(Error::InvalidConfig(format!("held-out class {c} does not exist in the data")));
    }
    let available: Vec<usize> = classes.into_iter().filter(|c| !eval.contains(c)).collect();
    if let Some(&bad) = class_counts.iter().find(|&&c| c < 2 || c > available.len()) {
        return Err(Error::InvalidConfig(format!(
            "class count {bad} must be between 2 and {}",
            available.len()
        )));
    }
    class_counts
        .iter()
        .map(|&c| {
            let mut keep: Vec<usize> = available[..c].to_vec();
            keep.extend(eval.iter().copied());
            let subset = data.select_classes(&keep)?;
            let mut cfg = base.clone();
            cfg.split.held_out_classes = eval.iter().copied().collect();
            cfg.rounds = Some(0);
            let (state, _) = prepare(&cfg, &subset)?;
            if state.pool.is_empty() {
                return Err(Error::Empty("OOD pool"));
            }
            let report = evaluate(&state, &cfg)?.report;
            Ok(ClassCountRow {
                class_count: c,
                cluster_accuracy: report.pool_cluster_accuracy,
                dra: report.dra,
            })
        })
        .collect()
}
