//! Binary model checkpoints.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic           8 bytes  "CDISCKPT"
//! version         u32      1
//! input_dim       u32
//! n_hidden        u32
//! hidden_dims     u32 x n_hidden
//! output_classes  u32
//! adam step       u64
//! epochs          u64
//! per layer, input side first:
//!     weights         f64 x fan_in*fan_out   (row-major, fan_in rows)
//!     bias            f64 x fan_out
//!     first moment    same two tensors
//!     second moment   same two tensors
//! ```
//!
//! Floats are stored bit-for-bit, so a load reproduces the saved model
//! exactly.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{Dense, Model, NetworkConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CDISCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn save_checkpoint(model: &Model, mut w: impl Write) -> Result<()> {
    let cfg = &model.config;
    let mut buf = Vec::with_capacity(64 + model.n_parameters() * 24);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let dims = std::iter::once(cfg.input_dim)
        .chain(std::iter::once(cfg.hidden_dims.len()))
        .chain(cfg.hidden_dims.iter().copied())
        .chain(std::iter::once(cfg.output_classes));
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Checkpoint(format!("dimension {d} does not fit in u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&model.step.to_le_bytes());
    buf.extend_from_slice(&model.epochs.to_le_bytes());
    for ((layer, m), v) in model.layers.iter().zip(&model.first_moment).zip(&model.second_moment) {
        for d in [layer, m, v] {
            for x in d.weights.iter().chain(d.bias.iter()) {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    w.write_all(&buf).map_err(io_err)
}

struct Cursor {
    bytes: Vec<u8>,
    pos: usize,
}

impl Cursor {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let out = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte offset {} (needed {n} bytes)", self.pos))
        })?;
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n * 8)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn dense(&mut self, fan_in: usize, fan_out: usize) -> Result<Dense> {
        let w = self.f64s(fan_in * fan_out)?;
        let b = self.f64s(fan_out)?;
        Ok(Dense {
            weights: Array2::from_shape_vec((fan_in, fan_out), w).expect("sized above"),
            bias: Array1::from_vec(b),
        })
    }
}

pub fn load_checkpoint(mut r: impl Read) -> Result<Model> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io_err)?;
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic at byte offset 0".into()));
    }
    let version = c.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_dim = c.u32()?;
    let n_hidden = c.u32()?;
    let hidden_dims = (0..n_hidden).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
    let output_classes = c.u32()?;
    let config = NetworkConfig::new(input_dim, hidden_dims, output_classes);
    config.validate()?;
    let step = c.u64()?;
    let epochs = c.u64()?;

    let widths = config.widths();
    let mut layers = Vec::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for w in widths.windows(2) {
        layers.push(c.dense(w[0], w[1])?);
        first.push(c.dense(w[0], w[1])?);
        second.push(c.dense(w[0], w[1])?);
    }
    if c.pos != c.bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after byte offset {}",
            c.bytes.len() - c.pos,
            c.pos
        )));
    }
    Ok(Model {
        config,
        layers,
        first_moment: first,
        second_moment: second,
        step,
        epochs,
    })
}
