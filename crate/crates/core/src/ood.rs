//! Confidence-threshold out-of-distribution detection.
//!
//! The detector is calibrated on labeled training data: the threshold is the
//! `(1 - q)` empirical quantile (lower interpolation) of the maximum softmax
//! probability, so about a fraction `q` of training samples are at or above
//! it. Incoming samples below the threshold are out-of-distribution.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{argmax_rows, Model};

pub const DEFAULT_QUANTILE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodDetector {
    pub threshold: f64,
    pub quantile: f64,
    pub calibration_size: usize,
}

/// Samples split by the detector. Indices refer to the caller's sample ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    /// `(sample, predicted class)` for confidently classified samples.
    pub in_distribution: Vec<(usize, usize)>,
    pub ood: Vec<usize>,
}

pub fn check_quantile(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("OOD quantile must be in (0, 1), got {q}")))
    }
}

/// Maximum predictive probability of each row.
pub fn max_confidence(model: &Model, features: ArrayView2<f64>) -> Result<Vec<f64>> {
    let p = model.predict_proba(features)?;
    Ok(p.rows()
        .into_iter()
        .map(|r| r.fold(0.0_f64, |m, &v| m.max(v)))
        .collect())
}

impl OodDetector {
    pub fn from_confidences(confidences: &[f64], q: f64) -> Result<Self> {
        check_quantile(q)?;
        if confidences.is_empty() {
            return Err(Error::Empty("calibration set"));
        }
        let mut sorted = confidences.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        // The epsilon keeps products such as 0.05 * 20 from landing just
        // below an integer.
        let idx = (((1.0 - q) * (n - 1) as f64) + 1e-9).floor() as usize;
        Ok(OodDetector {
            threshold: sorted[idx.min(n - 1)],
            quantile: q,
            calibration_size: n,
        })
    }

    pub fn calibrate(model: &Model, calibration: ArrayView2<f64>, q: f64) -> Result<Self> {
        check_quantile(q)?;
        if calibration.nrows() == 0 {
            return Err(Error::Empty("calibration set"));
        }
        Self::from_confidences(&max_confidence(model, calibration)?, q)
    }

    /// In-distribution iff confidence >= threshold.
    pub fn is_in_distribution(&self, confidence: f64) -> bool {
        confidence >= self.threshold
    }

    /// Routes every row of `features`; `ids[i]` names row `i` in the output.
    pub fn partition(&self, model: &Model, features: ArrayView2<f64>, ids: &[usize]) -> Result<Partition> {
        if ids.len() != features.nrows() {
            return Err(Error::ShapeMismatch {
                expected: features.nrows(),
                got: ids.len(),
            });
        }
        let p = model.predict_proba(features)?;
        let predicted = argmax_rows(&p);
        let mut out = Partition::default();
        for ((row, &id), class) in p.rows().into_iter().zip(ids).zip(predicted) {
            let conf = row[class];
            if self.is_in_distribution(conf) {
                out.in_distribution.push((id, class));
            } else {
                out.ood.push(id);
            }
        }
        Ok(out)
    }
}
