//! Run reports and the CSV files derived from them.
//!
//! `curves.csv` columns (frozen): `round,dra,mean_cluster_accuracy,ood_pool_size,train_loss`.
//! `clusters.csv` columns (frozen): `round,cluster_id,size,learnability,density,scorable,cluster_accuracy,plurality_label,accepted`.
//! `classcount.csv` columns (frozen): `class_count,cluster_accuracy,dra`.
//!
//! Floats use Rust's shortest round-trip formatting; a missing training loss
//! is an empty field.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{AcceptedCluster, ClassCountRow, DiscoveryState, ExperimentConfig, RoundRecord, SeedRegistry};
use crate::error::{Error, Result};
use crate::ood::OodDetector;

pub const REPORT_VERSION: u32 = 1;
pub const CURVES_HEADER: [&str; 5] = ["round", "dra", "mean_cluster_accuracy", "ood_pool_size", "train_loss"];
pub const CLUSTERS_HEADER: [&str; 9] = [
    "round",
    "cluster_id",
    "size",
    "learnability",
    "density",
    "scorable",
    "cluster_accuracy",
    "plurality_label",
    "accepted",
];
pub const CLASSCOUNT_HEADER: [&str; 3] = ["class_count", "cluster_accuracy", "dra"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub mode: RunMode,
    /// Complete configuration with defaults filled in; re-running it
    /// reproduces the run.
    pub config: ExperimentConfig,
    pub seeds: SeedRegistry,
    pub rounds: Vec<RoundRecord>,
    pub accepted: Vec<AcceptedCluster>,
    pub detector: Option<OodDetector>,
    pub final_dra: f64,
    pub early_stop: Option<String>,
    /// Mean dynamic-round purity of accepted clusters.
    pub mean_accepted_purity: Option<f64>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn new(mode: RunMode, cfg: &ExperimentConfig, state: &DiscoveryState, final_dra: f64, wall_clock_secs: f64) -> Self {
        let dynamic: Vec<f64> = match mode {
            RunMode::Dynamic => state.accepted.iter().map(|a| a.purity).collect(),
            RunMode::Static => Vec::new(),
        };
        RunReport {
            version: REPORT_VERSION,
            mode,
            config: cfg.clone(),
            seeds: SeedRegistry::of(cfg),
            rounds: state.history.clone(),
            accepted: state.accepted.clone(),
            detector: state.detector,
            final_dra,
            early_stop: state.early_stop.clone(),
            mean_accepted_purity: (!dynamic.is_empty()).then(|| dynamic.iter().sum::<f64>() / dynamic.len() as f64),
            wall_clock_secs,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("report: {e}")))
    }
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: "<output>".into(),
        message: e.to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_curves_csv(rounds: &[RoundRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CURVES_HEADER).map_err(csv_err)?;
    for r in rounds {
        out.write_record([
            r.round.to_string(),
            r.dra.to_string(),
            r.mean_cluster_accuracy.to_string(),
            r.ood_pool_size.to_string(),
            opt(r.train_loss),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

/// One row per cluster of every evaluation: the candidates scored for
/// acceptance in dynamic rounds, and the round-0 pool clusters.
pub fn write_clusters_csv(rounds: &[RoundRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CLUSTERS_HEADER).map_err(csv_err)?;
    for r in rounds {
        if r.candidates.is_empty() {
            for c in r.report.clusters.iter().filter(|c| c.name.starts_with("pool:")) {
                let id = c.name.trim_start_matches("pool:");
                out.write_record([
                    r.round.to_string(),
                    id.to_string(),
                    c.size.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    c.accuracy.to_string(),
                    c.label.to_string(),
                    "false".to_string(),
                ])
                .map_err(csv_err)?;
            }
            continue;
        }
        for c in &r.candidates {
            out.write_record([
                r.round.to_string(),
                c.features.cluster_id.to_string(),
                c.features.size.to_string(),
                c.features.learnability.to_string(),
                c.features.density.to_string(),
                c.features.scorable.to_string(),
                c.cluster_accuracy.to_string(),
                c.plurality_label.to_string(),
                c.accepted.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush().map_err(csv_err)
}

pub fn write_classcount_csv(rows: &[ClassCountRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CLASSCOUNT_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([r.class_count.to_string(), r.cluster_accuracy.to_string(), r.dra.to_string()])
            .map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}
