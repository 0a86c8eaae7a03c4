//! The five per-row stages and their composition.
//!
//! Every stage works in the narrow widths a vector datapath would use:
//! distances in `u8`, scores in `i16`, the row sum and reciprocal in `i32`.
//! The `_into` variants write into caller buffers so the tile path can reuse
//! scratch space across rows.

use super::types::{HeadParams, OutputMode, ProbRow, T_U8, U8_RECIP_SHIFT, U8_Z_FLOOR};
use crate::error::{Error, Result};

/// Stage 1: row maximum.
pub fn row_max(x: &[i8]) -> Result<i8> {
    x.iter().copied().max().ok_or(Error::EmptyRow)
}

/// Stage 2: `min(m - x_i, d_max)` as unsigned 8-bit distances.
pub fn clamped_distances(x: &[i8], m: i8, d_max: u8) -> Vec<u8> {
    let mut out = vec![0u8; x.len()];
    clamped_distances_into(x, m, d_max, &mut out);
    out
}

pub fn clamped_distances_into(x: &[i8], m: i8, d_max: u8, out: &mut [u8]) {
    debug_assert_eq!(x.len(), out.len());
    let m = i16::from(m);
    let d_max = i16::from(d_max);
    for (d, &xi) in out.iter_mut().zip(x) {
        // m - x_i reaches 255 before the clamp, so it needs more than 8 bits.
        *d = (m - i16::from(xi)).min(d_max) as u8;
    }
}

/// Stage 3: `s_i = b - s * delta_i`. No zero clamp; feasibility makes it redundant.
pub fn affine_scores(dist: &[u8], params: &HeadParams) -> Result<Vec<i16>> {
    let mut out = vec![0i16; dist.len()];
    affine_scores_into(dist, params, &mut out)?;
    Ok(out)
}

pub fn affine_scores_into(dist: &[u8], params: &HeadParams, out: &mut [i16]) -> Result<()> {
    params.check()?;
    debug_assert_eq!(dist.len(), out.len());
    let b = i32::from(params.b);
    let s = i32::from(params.s);
    for (o, &d) in out.iter_mut().zip(dist) {
        debug_assert!(d <= params.d_max);
        // 32-bit accumulate, 16-bit store. In range since 0 <= b - s*d <= b.
        *o = (b - s * i32::from(d)) as i16;
    }
    Ok(())
}

/// Stage 4: 32-bit row sum.
pub fn row_sum(scores: &[i16]) -> Result<i32> {
    scores
        .iter()
        .try_fold(0i32, |acc, &s| acc.checked_add(i32::from(s)))
        .ok_or(Error::RowSumOverflow)
}

/// Exact Q0 reciprocal `floor(t / z)`.
pub fn reciprocal_q0(z: i32, t: i32) -> Result<i32> {
    if z <= 0 {
        return Err(Error::DegenerateRowSum(z));
    }
    Ok(t / z)
}

/// Shifted reciprocal for the 8-bit path, `floor(255 * 2^r / z)`.
pub fn reciprocal_u8(z: i32, r: u32) -> Result<i32> {
    if z < U8_Z_FLOOR {
        return Err(Error::BelowU8Floor(z));
    }
    debug_assert!(r <= 23, "255 << r must fit in i32");
    Ok((T_U8 << r) / z)
}

/// Leading-bit reciprocal `floor(t / 2^k)` with `k = floor(log2 z)`.
///
/// Overestimates `t / z` by less than a factor of two.
pub fn reciprocal_clb(z: i32, t: i32) -> Result<i32> {
    if z <= 0 {
        return Err(Error::DegenerateRowSum(z));
    }
    let k = 31 - z.leading_zeros();
    Ok(t >> k)
}

/// Reciprocal matching `mode`'s normalization path.
pub fn reciprocal_for(mode: OutputMode, z: i32) -> Result<i32> {
    match mode {
        OutputMode::I16Div => reciprocal_q0(z, mode.scale()),
        OutputMode::I16Clb => reciprocal_clb(z, mode.scale()),
        OutputMode::U8Div { .. } => reciprocal_u8(z, U8_RECIP_SHIFT),
        OutputMode::U8Clb { .. } => {
            if z < U8_Z_FLOOR {
                return Err(Error::BelowU8Floor(z));
            }
            reciprocal_clb(z, T_U8 << U8_RECIP_SHIFT)
        }
    }
}

/// Stage 5: scale scores by the reciprocal.
pub fn normalize(scores: &[i16], rho: i32, mode: OutputMode) -> Result<ProbRow> {
    let z = row_sum(scores)?;
    let mut p = vec![0u16; scores.len()];
    normalize_into(scores, rho, mode, &mut p);
    Ok(ProbRow { p, z, rho, mode })
}

pub fn normalize_into(scores: &[i16], rho: i32, mode: OutputMode, out: &mut [u16]) {
    debug_assert_eq!(scores.len(), out.len());
    match mode {
        OutputMode::I16Div | OutputMode::I16Clb => {
            for (o, &s) in out.iter_mut().zip(scores) {
                *o = (i32::from(s) * rho) as u16;
            }
        }
        OutputMode::U8Div { out_shift } => {
            let shift = U8_RECIP_SHIFT + u32::from(out_shift);
            for (o, &s) in out.iter_mut().zip(scores) {
                *o = ((i32::from(s) * rho) >> shift) as u16;
            }
        }
        OutputMode::U8Clb { out_shift } => {
            let shift = U8_RECIP_SHIFT + u32::from(out_shift);
            for (o, &s) in out.iter_mut().zip(scores) {
                // The leading-bit reciprocal can overshoot by up to 2x.
                *o = ((i32::from(s) * rho) >> shift).min(T_U8) as u16;
            }
        }
    }
}

/// Reusable per-row buffers for [`hccs_row_into`].
#[derive(Debug, Default, Clone)]
pub struct RowScratch {
    dist: Vec<u8>,
    scores: Vec<i16>,
}

impl RowScratch {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            dist: Vec::with_capacity(n),
            scores: Vec::with_capacity(n),
        }
    }
}

/// Row sum and reciprocal reported alongside the probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowStats {
    pub z: i32,
    pub rho: i32,
}

/// Full single-row surrogate softmax.
pub fn hccs_row(x: &[i8], params: &HeadParams, mode: OutputMode) -> Result<ProbRow> {
    let mut scratch = RowScratch::with_capacity(x.len());
    let mut p = vec![0u16; x.len()];
    let RowStats { z, rho } = hccs_row_into(x, params, mode, &mut scratch, &mut p)?;
    Ok(ProbRow { p, z, rho, mode })
}

/// Allocation-free [`hccs_row`]; `out` must have the row's length.
pub fn hccs_row_into(
    x: &[i8],
    params: &HeadParams,
    mode: OutputMode,
    scratch: &mut RowScratch,
    out: &mut [u16],
) -> Result<RowStats> {
    if out.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: out.len(),
        });
    }
    let m = row_max(x)?;
    let n = x.len();
    scratch.dist.resize(n, 0);
    scratch.scores.resize(n, 0);
    clamped_distances_into(x, m, params.d_max, &mut scratch.dist);
    affine_scores_into(&scratch.dist, params, &mut scratch.scores)?;
    let z = row_sum(&scratch.scores)?;
    let rho = reciprocal_for(mode, z)?;
    normalize_into(&scratch.scores, rho, mode, out);
    Ok(RowStats { z, rho })
}
