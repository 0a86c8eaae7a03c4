use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::constraints::feasibility_band;
use super::objective::{ObjectiveScratch, PreparedHead, Scope};
use crate::error::{Error, Result};
use crate::kernel::{HeadParams, D_MAX_LIMIT};

/// Candidate slopes and clamp bounds; intercepts are swept across each
/// `(S, D_max)` pair's feasibility band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub s_values: Vec<i16>,
    pub d_values: Vec<u8>,
    /// Intercept stride; `None` picks `max(1, (B_hi - B_lo) / 64)` per band.
    pub b_step: Option<u16>,
}

impl Default for GridSpec {
    fn default() -> Self {
        let mut d_values: Vec<u8> = (8..=120).step_by(8).collect();
        d_values.push(127);
        Self {
            s_values: (1..=16).collect(),
            d_values,
            b_step: None,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("grid: {m}")));
        if self.s_values.is_empty() || self.d_values.is_empty() {
            return bad("S and D_max candidate lists must be non-empty");
        }
        if self.s_values.iter().any(|&s| s < 0) {
            return bad("S candidates must be non-negative");
        }
        if self.d_values.iter().any(|&d| d == 0 || d > D_MAX_LIMIT) {
            return bad("D_max candidates must lie in [1, 127]");
        }
        if !self.s_values.windows(2).all(|w| w[0] < w[1])
            || !self.d_values.windows(2).all(|w| w[0] < w[1])
        {
            return bad("candidate lists must be strictly ascending");
        }
        if self.b_step == Some(0) {
            return bad("B step must be positive");
        }
        Ok(())
    }

    /// Every feasible triple for rows of length `n`, ordered by `(S, D_max, B)`.
    ///
    /// Each band is swept from `B_lo` in steps of the stride; `B_hi` is
    /// always included so the largest admissible intercept is reachable.
    pub fn candidates(&self, n: usize) -> Vec<HeadParams> {
        let mut out = Vec::new();
        for &s in &self.s_values {
            for &d in &self.d_values {
                let band = feasibility_band(n, s, d);
                if band.is_empty() {
                    continue;
                }
                let step = match self.b_step {
                    Some(k) => i32::from(k),
                    None => ((band.b_hi - band.b_lo) / 64).max(1),
                };
                let mut b = band.b_lo;
                while b <= band.b_hi {
                    out.push(HeadParams::new(b as i16, s, d));
                    b += step;
                }
                if (band.b_hi - band.b_lo) % step != 0 {
                    out.push(HeadParams::new(band.b_hi as i16, s, d));
                }
            }
        }
        out
    }
}

/// Best candidate for a scope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub params: HeadParams,
    /// Sum of per-row KL over the scope.
    pub total_kl: f64,
    pub mean_kl: f64,
    pub candidates: usize,
}

/// Total order used to pick the winner: lower KL, then smaller `(S, D_max, B)`.
fn rank(a: &(f64, HeadParams), b: &(f64, HeadParams)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.s.cmp(&b.1.s))
        .then(a.1.d_max.cmp(&b.1.d_max))
        .then(a.1.b.cmp(&b.1.b))
}

/// Exhaustive sweep of `grid` over the rows in `scope`.
///
/// Candidates are evaluated in parallel; the winner does not depend on
/// evaluation order.
pub fn search_scope(scope: &Scope<'_>, grid: &GridSpec) -> Result<SearchOutcome> {
    grid.validate()?;
    let candidates = grid.candidates(scope.n());
    let scored = candidates
        .par_iter()
        .map_init(ObjectiveScratch::default, |scratch, p| {
            scope.total_kl(p, scratch).map(|kl| (kl, *p))
        })
        .collect::<Result<Vec<_>>>()?;
    let (total_kl, params) = scored
        .into_iter()
        .min_by(rank)
        .ok_or(Error::EmptyFeasibleGrid)?;
    Ok(SearchOutcome {
        params,
        total_kl,
        mean_kl: total_kl / scope.rows() as f64,
        candidates: candidates.len(),
    })
}

/// Grid search over a single group of rows sharing one dequantization scale.
///
/// Returns the winning params and their mean KL in nats.
pub fn grid_search<R: AsRef<[i8]>>(
    rows: &[R],
    n: usize,
    grid: &GridSpec,
    scale: f64,
) -> Result<(HeadParams, f64)> {
    if rows.is_empty() {
        return Err(Error::EmptyRow);
    }
    let mut flat = Vec::with_capacity(rows.len() * n);
    for r in rows {
        let r = r.as_ref();
        if r.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: r.len(),
            });
        }
        flat.extend_from_slice(r);
    }
    let head = PreparedHead::new(&flat, n, scale)?;
    let scope = Scope::new(vec![vec![&head]])?;
    let out = search_scope(&scope, grid)?;
    Ok((out.params, out.mean_kl))
}
