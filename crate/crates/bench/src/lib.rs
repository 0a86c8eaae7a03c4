//! Host-side throughput measurement of the surrogate kernel and the linear
//! tile-scaling model built on it.

use std::hint::black_box;
use std::path::Path;
use std::time::{Duration, Instant};

use hccs_core::calibration::default_params;
use hccs_core::kernel::{
    hccs_row_into, hccs_tile, HeadParams, LogitTile, OutputMode, ParamsTable, ProbTile, RowScratch,
};
use hccs_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MIN_REPEATS: usize = 5;
/// Tile counts swept by default, up to a full 184-tile array.
pub const DEFAULT_TILES: [u32; 8] = [1, 2, 4, 8, 16, 32, 64, 184];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub mode: OutputMode,
    pub n: usize,
    pub rows: usize,
    pub repeats: usize,
    pub workers: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(mode: OutputMode, n: usize) -> Self {
        Self {
            mode,
            n,
            rows: 4096,
            repeats: 7,
            workers: 1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub mode: OutputMode,
    pub n: usize,
    pub rows: usize,
    pub repeats: usize,
    pub workers: usize,
    pub params: HeadParams,
    /// Median wall time of one pass over all rows, seconds.
    pub wall_time_s: f64,
    pub elements_per_second: f64,
    pub ns_per_row: f64,
    /// SHA-256 of the outputs of the last timed pass.
    pub checksum: String,
    /// Median empty-pass time as a fraction of the median kernel time.
    pub harness_overhead: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub tiles: u32,
    pub elements_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRatio {
    pub n: usize,
    pub baseline: OutputMode,
    pub variant: OutputMode,
    /// variant elements/s over baseline elements/s.
    pub ratio: f64,
}

/// Uniform logits in `[-127, 127]`, all tagged head 0.
pub fn gen_rows(n: usize, rows: usize, seed: u64) -> Result<LogitTile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * rows)
        .map(|_| rng.random_range(-127i8..=127))
        .collect();
    LogitTile::new(n, data, vec![0; rows])
}

/// SHA-256 over probabilities, row sums and reciprocals, little-endian.
pub fn checksum(tile: &ProbTile) -> String {
    let mut h = Sha256::new();
    for v in &tile.p {
        h.update(v.to_le_bytes());
    }
    for (z, r) in tile.z.iter().zip(&tile.rho) {
        h.update(z.to_le_bytes());
        h.update(r.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn table(params: HeadParams) -> ParamsTable {
    ParamsTable::from([(0, params)])
}

/// Reference run through [`hccs_tile`] outside any timing loop.
pub fn run_untimed(
    tile: &LogitTile,
    params: HeadParams,
    mode: OutputMode,
    workers: usize,
) -> Result<ProbTile> {
    hccs_tile(tile, &table(params), mode, workers)
}

fn timed_pass(
    tile: &LogitTile,
    params: &HeadParams,
    mode: OutputMode,
    out: &mut ProbTile,
) -> Result<Duration> {
    let n = tile.cols();
    let mut scratch = RowScratch::with_capacity(n);
    let start = Instant::now();
    for r in 0..tile.rows() {
        let x = black_box(tile.row(r));
        let st = hccs_row_into(
            x,
            params,
            mode,
            &mut scratch,
            &mut out.p[r * n..(r + 1) * n],
        )?;
        out.z[r] = st.z;
        out.rho[r] = st.rho;
    }
    black_box(&out.p);
    Ok(start.elapsed())
}

fn empty_pass(tile: &LogitTile) -> Duration {
    let start = Instant::now();
    for r in 0..tile.rows() {
        black_box(tile.row(r));
    }
    start.elapsed()
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

/// Median-of-repeats throughput of `cfg.mode` on random rows.
///
/// Rows are generated and the kernel warmed up before timing starts. With
/// more than one worker each pass goes through [`hccs_tile`].
pub fn bench_mode(cfg: &BenchConfig) -> Result<BenchResult> {
    if cfg.repeats < MIN_REPEATS {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_REPEATS} repeats required"
        )));
    }
    if cfg.rows == 0 || cfg.workers == 0 {
        return Err(Error::InvalidInput(
            "rows and workers must be positive".into(),
        ));
    }
    let params = default_params(cfg.n)?;
    let tile = gen_rows(cfg.n, cfg.rows, cfg.seed)?;
    let mut out = run_untimed(&tile, params, cfg.mode, 1)?;

    let mut kernel = Vec::with_capacity(cfg.repeats);
    let mut empty = Vec::with_capacity(cfg.repeats);
    if cfg.workers == 1 {
        timed_pass(&tile, &params, cfg.mode, &mut out)?;
        for _ in 0..cfg.repeats {
            kernel.push(timed_pass(&tile, &params, cfg.mode, &mut out)?);
            empty.push(empty_pass(&tile));
        }
    } else {
        let t = table(params);
        hccs_tile(&tile, &t, cfg.mode, cfg.workers)?;
        for _ in 0..cfg.repeats {
            let start = Instant::now();
            out = black_box(hccs_tile(&tile, &t, cfg.mode, cfg.workers)?);
            kernel.push(start.elapsed());
            empty.push(empty_pass(&tile));
        }
    }

    let wall = median(kernel).as_secs_f64().max(1e-12);
    let overhead = median(empty).as_secs_f64() / wall;
    Ok(BenchResult {
        mode: cfg.mode,
        n: cfg.n,
        rows: cfg.rows,
        repeats: cfg.repeats,
        workers: cfg.workers,
        params,
        wall_time_s: wall,
        elements_per_second: (cfg.rows * cfg.n) as f64 / wall,
        ns_per_row: wall * 1e9 / cfg.rows as f64,
        checksum: checksum(&out),
        harness_overhead: overhead,
    })
}

/// Aggregate throughput of `t` independent tiles: exactly `t` times the
/// single-tile figure.
pub fn tile_scaling(single: &BenchResult, tiles: &[u32]) -> Result<Vec<ScalingPoint>> {
    if tiles.contains(&0) {
        return Err(Error::InvalidInput("tile counts must be positive".into()));
    }
    Ok(tiles
        .iter()
        .map(|&t| ScalingPoint {
            tiles: t,
            elements_per_second: f64::from(t) * single.elements_per_second,
        })
        .collect())
}

/// Throughput of each CLB mode relative to its exact-division sibling at the same `n`.
pub fn clb_vs_div(results: &[BenchResult]) -> Vec<SpeedRatio> {
    let mut out = Vec::new();
    for v in results.iter().filter(|r| r.mode.is_clb()) {
        let base_mode = if v.mode.is_u8() {
            OutputMode::U8Div {
                out_shift: v.mode.out_shift(),
            }
        } else {
            OutputMode::I16Div
        };
        if let Some(b) = results.iter().find(|r| r.n == v.n && r.mode == base_mode) {
            out.push(SpeedRatio {
                n: v.n,
                baseline: base_mode,
                variant: v.mode,
                ratio: v.elements_per_second / b.elements_per_second,
            });
        }
    }
    out
}

/// CSV with header `n,mode,tiles,elements_per_second`.
pub fn write_scaling_csv(
    path: impl AsRef<Path>,
    rows: &[(BenchResult, Vec<ScalingPoint>)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "mode", "tiles", "elements_per_second"])?;
    for (single, points) in rows {
        for p in points {
            w.write_record([
                single.n.to_string(),
                single.mode.to_string(),
                p.tiles.to_string(),
                p.elements_per_second.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
