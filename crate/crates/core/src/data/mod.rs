//! Calibration datasets, synthetic logit generation, and on-disk formats.

mod curves;
mod dataset_file;
mod params_file;
mod prob_file;
mod synth;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use curves::{read_curves, write_curves, CurvePoint};
pub use dataset_file::{
    decode_dataset, encode_dataset, read_dataset, write_dataset, DATASET_MAGIC,
};
pub use params_file::{read_params, write_params, ParamsEntry, ParamsFile};
pub use prob_file::{decode_prob_tile, encode_prob_tile, read_prob_tile, write_prob_tile};
pub use synth::{
    gen_head, gen_planted_head, max_abs_scale, quantize_logits, quantize_with_scale, HeadSpec,
    PlantedHead,
};

use crate::error::{Error, Result};
use crate::kernel::LogitTile;

/// Rows of one head sharing a dequantization scale.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadRecord {
    pub head_id: u16,
    n: usize,
    pub scale: f64,
    logits: Vec<i8>,
}

impl HeadRecord {
    pub fn new(head_id: u16, n: usize, scale: f64, logits: Vec<i8>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyRow);
        }
        if !logits.len().is_multiple_of(n) {
            return Err(Error::LengthMismatch {
                left: logits.len(),
                right: n,
            });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidScale(scale));
        }
        Ok(Self {
            head_id,
            n,
            scale,
            logits,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row_count(&self) -> usize {
        self.logits.len() / self.n
    }

    pub fn row(&self, r: usize) -> &[i8] {
        &self.logits[r * self.n..(r + 1) * self.n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, i8> {
        self.logits.chunks_exact(self.n)
    }

    pub fn logits(&self) -> &[i8] {
        &self.logits
    }

    /// Same head restricted to its first `k` rows.
    pub fn truncated(&self, k: usize) -> HeadRecord {
        let k = k.min(self.row_count());
        HeadRecord {
            logits: self.logits[..k * self.n].to_vec(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerRecord {
    pub heads: Vec<HeadRecord>,
}

/// Logit rows grouped by layer and head; every row has the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationDataset {
    layers: Vec<LayerRecord>,
    n: usize,
}

impl CalibrationDataset {
    pub fn new(layers: Vec<LayerRecord>) -> Result<Self> {
        let mut n = None;
        for head in layers.iter().flat_map(|l| &l.heads) {
            match n {
                None => n = Some(head.n),
                Some(prev) if prev != head.n => {
                    return Err(Error::Schema(format!(
                        "all rows must share n: found {prev} and {}",
                        head.n
                    )))
                }
                _ => {}
            }
        }
        let n = n.ok_or_else(|| Error::Schema("dataset has no heads".into()))?;
        Ok(Self { layers, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layers(&self) -> &[LayerRecord] {
        &self.layers
    }

    /// `(layer index, head)` in storage order.
    pub fn heads(&self) -> impl Iterator<Item = (usize, &HeadRecord)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| layer.heads.iter().map(move |h| (l, h)))
    }

    pub fn row_count(&self) -> usize {
        self.heads().map(|(_, h)| h.row_count()).sum()
    }

    /// Every row in storage order as one tile tagged by head id.
    pub fn to_tile(&self) -> LogitTile {
        let mut data = Vec::with_capacity(self.row_count() * self.n);
        let mut ids = Vec::with_capacity(self.row_count());
        for (_, h) in self.heads() {
            data.extend_from_slice(h.logits());
            ids.extend(std::iter::repeat_n(u32::from(h.head_id), h.row_count()));
        }
        LogitTile::new(self.n, data, ids).expect("dataset rows are uniform")
    }
}

/// Pretty-printed JSON with a trailing newline. Struct fields keep
/// declaration order so output is stable across runs.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}
