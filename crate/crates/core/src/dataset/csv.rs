use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

/// Loads a CSV file with a header row. The last column is the integer class
/// label; every other column is a real-valued feature.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = ::csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        ::csv::ErrorKind::Io(io) => Error::io(path, io),
        other => err(format!("{other:?}")),
    })?;
    let width = reader.headers().map_err(|e| err(e.to_string()))?.len();
    if width < 2 {
        return Err(err("need at least one feature column and a label column".into()));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let line = row + 2;
        for field in record.iter().take(width - 1) {
            let v: f64 = field
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(format!("line {line}: bad feature value {field:?}")))?;
            values.push(v);
        }
        let field = record[width - 1].trim();
        let label: usize = field
            .parse()
            .map_err(|_| err(format!("line {line}: bad label {field:?}")))?;
        labels.push(label);
    }
    let features = Array2::from_shape_vec((labels.len(), width - 1), values)
        .map_err(|e| err(e.to_string()))?;
    Dataset::new(features, labels)
}
