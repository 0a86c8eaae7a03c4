use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::HeadRecord;
use crate::calibration::{feasibility_band, GridSpec};
use crate::error::{Error, Result};
use crate::kernel::HeadParams;

/// Recipe for one synthetic head.
///
/// Raw logits are standard normal divided by `temperature`: large
/// temperatures give flat (broad) attention, small ones peaked (focused).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub head_id: u16,
    pub temperature: f64,
    pub rows: usize,
    pub n: usize,
    pub seed: u64,
}

/// Symmetric max-abs scale mapping `raw` onto `[-127, 127]`; 1 for all-zero input.
pub fn max_abs_scale(raw: &[f64]) -> Result<f64> {
    let mut m = 0.0f64;
    for (i, v) in raw.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(i));
        }
        m = m.max(v.abs());
    }
    Ok(if m == 0.0 { 1.0 } else { m / 127.0 })
}

/// `round(raw_i / scale)` clamped to `[-127, 127]`.
pub fn quantize_with_scale(raw: &[f64], scale: f64) -> Result<Vec<i8>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidScale(scale));
    }
    raw.iter()
        .enumerate()
        .map(|(i, &v)| {
            if !v.is_finite() {
                return Err(Error::NonFinite(i));
            }
            Ok((v / scale).round().clamp(-127.0, 127.0) as i8)
        })
        .collect()
}

/// Per-row symmetric quantization; returns the logits and their scale.
pub fn quantize_logits(raw: &[f64]) -> Result<(Vec<i8>, f64)> {
    let scale = max_abs_scale(raw)?;
    Ok((quantize_with_scale(raw, scale)?, scale))
}

/// Draws `spec.rows` rows and quantizes them with one shared head scale.
pub fn gen_head(spec: &HeadSpec) -> Result<HeadRecord> {
    if !(spec.temperature.is_finite() && spec.temperature > 0.0) {
        return Err(Error::InvalidInput(format!(
            "temperature must be positive, got {}",
            spec.temperature
        )));
    }
    if spec.n == 0 {
        return Err(Error::EmptyRow);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let raw: Vec<f64> = (0..spec.rows * spec.n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z / spec.temperature
        })
        .collect();
    let scale = max_abs_scale(&raw)?;
    let logits = quantize_with_scale(&raw, scale)?;
    HeadRecord::new(spec.head_id, spec.n, scale, logits)
}

/// A synthetic head whose softmax is matched almost exactly by `params`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedHead {
    pub record: HeadRecord,
    pub params: HeadParams,
    /// The three distances present in every row: 0, one below `D_max`, one clamped.
    pub levels: [u8; 3],
}

/// Draws `(B, S, D_max)` and logits with three distance levels `0 < a < D_max < c`
/// so that the softmax weights at `a` and `c` equal the surrogate's
/// `(B - S a) / B` and `(B - S D_max) / B`: exactly at `a` and to within a
/// relative `1e-4` at `c`.
///
/// `S` is drawn from 2..=6 and `D_max` from the default grid's 16..=64.
pub fn gen_planted_head(head_id: u16, rows: usize, n: usize, seed: u64) -> Result<PlantedHead> {
    if n < 3 || rows == 0 {
        return Err(Error::InvalidInput(
            "planted heads need n >= 3 and at least one row".into(),
        ));
    }
    let d_choices: Vec<u8> = GridSpec::default()
        .d_values
        .into_iter()
        .filter(|d| (16..=64).contains(d))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100_000 {
        let s: i16 = rng.random_range(2..=6);
        let d = d_choices[rng.random_range(0..d_choices.len())];
        let band = feasibility_band(n, s, d);
        if band.is_empty() {
            continue;
        }
        let b = rng.random_range(band.b_lo..=band.b_hi);
        let a = rng.random_range(2..i32::from(d) / 2);
        let (bf, sf) = (f64::from(b), f64::from(s));
        let scale = (bf / (bf - sf * f64::from(a))).ln() / f64::from(a);
        let c_exact = (bf / (bf - sf * f64::from(d))).ln() / scale;
        let c = c_exact.round();
        if c <= f64::from(d) || c > 200.0 || ((c - c_exact) * scale).abs() > 1e-4 {
            continue;
        }
        let c = c as i32;
        let mut logits = Vec::with_capacity(rows * n);
        let mut row = vec![0i32; n];
        for _ in 0..rows {
            let top = rng.random_range(c - 127..=127);
            let k0 = rng.random_range(1..=3.min(n - 2));
            let k1 = rng.random_range(1..=(n - k0 - 1).min(n / 2));
            for (i, v) in row.iter_mut().enumerate() {
                *v = if i < k0 {
                    top
                } else if i < k0 + k1 {
                    top - a
                } else {
                    top - c
                };
            }
            // Fisher-Yates so level positions vary between rows.
            for i in (1..n).rev() {
                row.swap(i, rng.random_range(0..=i));
            }
            logits.extend(row.iter().map(|&v| v as i8));
        }
        return Ok(PlantedHead {
            record: HeadRecord::new(head_id, n, scale, logits)?,
            params: HeadParams::new(b as i16, s, d),
            levels: [0, a as u8, c as u8],
        });
    }
    Err(Error::InvalidInput(format!(
        "no plantable params for n={n}"
    )))
}
