use std::collections::BTreeMap;

use super::row::{hccs_row_into, RowScratch, RowStats};
use super::types::{HeadParams, OutputMode, ProbRow};
use crate::error::{Error, Result};

/// Head id to calibrated constants.
pub type ParamsTable = BTreeMap<u32, HeadParams>;

/// Row-major block of logits, one head id per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogitTile {
    cols: usize,
    data: Vec<i8>,
    head_ids: Vec<u32>,
}

impl LogitTile {
    pub fn new(cols: usize, data: Vec<i8>, head_ids: Vec<u32>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::EmptyRow);
        }
        if data.len() != cols * head_ids.len() {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: cols * head_ids.len(),
            });
        }
        Ok(Self {
            cols,
            data,
            head_ids,
        })
    }

    pub fn rows(&self) -> usize {
        self.head_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[i8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn head_id(&self, r: usize) -> u32 {
        self.head_ids[r]
    }

    pub fn head_ids(&self) -> &[u32] {
        &self.head_ids
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }
}

/// Output of [`hccs_tile`]: probabilities plus per-row sum and reciprocal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbTile {
    pub cols: usize,
    pub mode: OutputMode,
    pub head_ids: Vec<u32>,
    pub p: Vec<u16>,
    pub z: Vec<i32>,
    pub rho: Vec<i32>,
}

impl ProbTile {
    pub fn rows(&self) -> usize {
        self.head_ids.len()
    }

    pub fn row_probs(&self, r: usize) -> &[u16] {
        &self.p[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row(&self, r: usize) -> ProbRow {
        ProbRow {
            p: self.row_probs(r).to_vec(),
            z: self.z[r],
            rho: self.rho[r],
            mode: self.mode,
        }
    }
}

/// Applies the surrogate to every row, splitting rows into `workers`
/// contiguous disjoint ranges processed on separate threads.
///
/// The result does not depend on `workers`.
pub fn hccs_tile(
    tile: &LogitTile,
    params: &ParamsTable,
    mode: OutputMode,
    workers: usize,
) -> Result<ProbTile> {
    if workers == 0 {
        return Err(Error::InvalidInput("workers must be at least 1".into()));
    }
    // Resolve every head up front so no worker sees a missing entry.
    let row_params = tile
        .head_ids
        .iter()
        .map(|&h| params.get(&h).copied().ok_or(Error::UnknownHead(h)))
        .collect::<Result<Vec<_>>>()?;

    let rows = tile.rows();
    let cols = tile.cols;
    let mut p = vec![0u16; rows * cols];
    let mut stats = vec![RowStats { z: 0, rho: 0 }; rows];

    let workers = workers.min(rows.max(1));
    let per_worker = rows.div_ceil(workers).max(1);

    let run = |first: usize, out: &mut [u16], stats: &mut [RowStats]| -> Result<()> {
        let mut scratch = RowScratch::with_capacity(cols);
        for (i, (o, st)) in out.chunks_exact_mut(cols).zip(stats.iter_mut()).enumerate() {
            let r = first + i;
            *st = hccs_row_into(tile.row(r), &row_params[r], mode, &mut scratch, o)?;
        }
        Ok(())
    };

    if workers == 1 {
        run(0, &mut p, &mut stats)?;
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = p
                .chunks_mut(per_worker * cols)
                .zip(stats.chunks_mut(per_worker))
                .enumerate()
                .map(|(k, (out, st))| scope.spawn(move || run(k * per_worker, out, st)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("tile worker panicked"))
                .collect::<Result<Vec<()>>>()
        })?;
    }

    Ok(ProbTile {
        cols,
        mode,
        head_ids: tile.head_ids.clone(),
        p,
        z: stats.iter().map(|s| s.z).collect(),
        rho: stats.iter().map(|s| s.rho).collect(),
    })
}
