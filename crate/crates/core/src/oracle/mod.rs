//! Double-precision reference softmax and the divergence metrics used to
//! judge the integer surrogate.
//!
//! All logarithms are natural, so divergences and entropies are in nats.

mod wide;

pub use wide::hccs_wide_oracle;

use crate::error::{Error, Result};
use crate::kernel::ProbRow;

/// A probability vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Normalizes non-negative weights by their sum.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::EmptyRow);
        }
        if let Some(i) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite(i));
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }
        Ok(Self(w.iter().map(|v| v / total).collect()))
    }

    /// `q_i = p_i / sum(p)` for an integer surrogate row.
    pub fn from_prob_row(row: &ProbRow) -> Result<Self> {
        let w: Vec<f64> = row.p.iter().map(|&v| f64::from(v)).collect();
        Self::from_weights(&w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Max-centered exact softmax.
pub fn softmax_exact(x: &[f64]) -> Result<ProbVector> {
    if x.is_empty() {
        return Err(Error::EmptyRow);
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(ProbVector(e.into_iter().map(|v| v / z).collect()))
}

/// Real-valued logits `scale * x_i`.
pub fn dequantize(x: &[i8], scale: f64) -> Result<Vec<f64>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidScale(scale));
    }
    Ok(x.iter().map(|&v| scale * f64::from(v)).collect())
}

/// `KL(p || q) = sum p_i ln(p_i / q_i)` with `0 ln 0 = 0`.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.0.iter().zip(&q.0).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::SupportMismatch(i));
            }
            acc += pi * (pi / qi).ln();
        }
    }
    // Rounding can push an identical pair a hair below zero.
    Ok(acc.max(0.0))
}

/// Shannon entropy `-sum p_i ln p_i`.
pub fn entropy(p: &ProbVector) -> f64 {
    -p.0.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}
