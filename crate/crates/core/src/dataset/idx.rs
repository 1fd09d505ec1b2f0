//! IDX binary files (the MNIST distribution format).
//!
//! Layout: big-endian u32 magic (2051 for images, 2049 for labels), one
//! big-endian u32 per dimension, then unsigned bytes in row-major order.

use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 2051;
const LABELS_MAGIC: u32 = 2049;

struct IdxFile<'a> {
    path: &'a Path,
    bytes: Vec<u8>,
}

impl<'a> IdxFile<'a> {
    fn open(path: &'a Path, magic: u32) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let file = IdxFile { path, bytes };
        let found = file.u32_at(0)?;
        if found != magic {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                found,
                expected: magic,
            });
        }
        Ok(file)
    }

    fn slice(&self, offset: usize, needed: usize) -> Result<&[u8]> {
        self.bytes
            .get(offset..offset.saturating_add(needed))
            .ok_or_else(|| Error::Truncated {
                path: self.path.to_path_buf(),
                offset,
                needed,
                len: self.bytes.len(),
            })
    }

    fn u32_at(&self, offset: usize) -> Result<u32> {
        let b = self.slice(offset, 4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Loads an image/label IDX pair. Pixels are scaled to `[0, 1]` by dividing
/// by 255 and every sample is labeled with its file label.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = IdxFile::open(images_path.as_ref(), IMAGES_MAGIC)?;
    let n = images.u32_at(4)? as usize;
    let rows = images.u32_at(8)? as usize;
    let cols = images.u32_at(12)? as usize;

    let labels = IdxFile::open(labels_path.as_ref(), LABELS_MAGIC)?;
    let n_labels = labels.u32_at(4)? as usize;
    if n_labels != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }

    let width = rows * cols;
    let pixels = images.slice(16, n * width)?;
    let label_bytes = labels.slice(8, n)?;

    let features = Array2::from_shape_fn((n, width), |(i, j)| f64::from(pixels[i * width + j]) / 255.0);
    let true_labels = label_bytes.iter().map(|&b| usize::from(b)).collect();
    Dataset::new(features, true_labels)
}
