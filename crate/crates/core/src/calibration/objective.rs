//! KL objective between exact softmax and the 16-bit surrogate.
//!
//! [`objective_kl`] is the literal definition. [`PreparedHead`] caches the
//! softmax targets and their logarithms so a grid sweep only pays for the
//! integer kernel and a table lookup per element.

use std::sync::OnceLock;

use super::constraints::validate_params;
use crate::data::HeadRecord;
use crate::error::{Error, Result};
use crate::kernel::{hccs_row, hccs_row_into, HeadParams, OutputMode, RowScratch, T_I16};
use crate::oracle::{dequantize, kl_divergence, softmax_exact, ProbVector};

/// The objective always runs on the exact-division 16-bit path.
pub const OBJECTIVE_MODE: OutputMode = OutputMode::I16Div;

fn require_feasible(params: &HeadParams, n: usize) -> Result<()> {
    let v = validate_params(params, n);
    if v.is_ok() {
        return Ok(());
    }
    let names: Vec<String> = v.violations.iter().map(|x| x.to_string()).collect();
    Err(Error::InfeasibleParams(format!(
        "{params} for n={n}: {}",
        names.join("; ")
    )))
}

/// Mean over rows of `KL(softmax(scale * x) || hccs(x) / sum)`, in nats.
pub fn objective_kl<R: AsRef<[i8]>>(rows: &[R], params: &HeadParams, scale: f64) -> Result<f64> {
    let first = rows.first().ok_or(Error::EmptyRow)?;
    let n = first.as_ref().len();
    require_feasible(params, n)?;
    let mut total = 0.0;
    for row in rows {
        let x = row.as_ref();
        if x.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: x.len(),
            });
        }
        let p = softmax_exact(&dequantize(x, scale)?)?;
        let q = ProbVector::from_prob_row(&hccs_row(x, params, OBJECTIVE_MODE)?)?;
        total += kl_divergence(&p, &q)?;
    }
    Ok(total / rows.len() as f64)
}

/// `ln k` for every value the 16-bit exact-division path can emit.
fn ln_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=T_I16).map(|k| (k as f64).ln()).collect())
}

/// Rows of one head with their softmax targets precomputed.
#[derive(Debug, Clone)]
pub struct PreparedHead {
    n: usize,
    logits: Vec<i8>,
    p: Vec<f64>,
    ln_p: Vec<f64>,
}

impl PreparedHead {
    pub fn new(logits: &[i8], n: usize, scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyRow);
        }
        if !logits.len().is_multiple_of(n) {
            return Err(Error::LengthMismatch {
                left: logits.len(),
                right: n,
            });
        }
        let mut p = Vec::with_capacity(logits.len());
        let mut ln_p = Vec::with_capacity(logits.len());
        for row in logits.chunks_exact(n) {
            let x = dequantize(row, scale)?;
            let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ln_z = x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for v in x {
                let lp = v - m - ln_z;
                ln_p.push(lp);
                p.push(lp.exp());
            }
        }
        Ok(Self {
            n,
            logits: logits.to_vec(),
            p,
            ln_p,
        })
    }

    pub fn from_record(head: &HeadRecord) -> Result<Self> {
        Self::new(head.logits(), head.n(), head.scale)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.logits.len() / self.n
    }

    /// Sum of per-row KL over this head's rows, in row order.
    ///
    /// Params must already be known feasible for `n`.
    pub fn total_kl(&self, params: &HeadParams, scratch: &mut ObjectiveScratch) -> Result<f64> {
        let ln = ln_table();
        scratch.out.resize(self.n, 0);
        let mut total = 0.0;
        for (r, x) in self.logits.chunks_exact(self.n).enumerate() {
            hccs_row_into(
                x,
                params,
                OBJECTIVE_MODE,
                &mut scratch.row,
                &mut scratch.out,
            )?;
            let span = r * self.n..(r + 1) * self.n;
            total += row_kl(&self.p[span.clone()], &self.ln_p[span], &scratch.out, ln)?;
        }
        Ok(total)
    }

    /// Mean KL over rows; checks feasibility first.
    pub fn mean_kl(&self, params: &HeadParams) -> Result<f64> {
        require_feasible(params, self.n)?;
        let mut scratch = ObjectiveScratch::default();
        Ok(self.total_kl(params, &mut scratch)? / self.rows() as f64)
    }
}

fn row_kl(p: &[f64], ln_p: &[f64], q: &[u16], ln: &[f64]) -> Result<f64> {
    let sum: u32 = q.iter().map(|&v| u32::from(v)).sum();
    let ln_sum = (sum as f64).ln();
    let mut acc = 0.0;
    for (i, ((&pi, &lpi), &qi)) in p.iter().zip(ln_p).zip(q).enumerate() {
        if pi > 0.0 {
            if qi == 0 {
                return Err(Error::SupportMismatch(i));
            }
            acc += pi * (lpi - ln[qi as usize] + ln_sum);
        }
    }
    Ok(acc.max(0.0))
}

/// Reusable buffers for [`PreparedHead::total_kl`].
#[derive(Debug, Default, Clone)]
pub struct ObjectiveScratch {
    row: RowScratch,
    out: Vec<u16>,
}

/// Heads grouped by layer. Totals are summed per head, then per layer, then
/// across layers, always in storage order, so any two scopes covering the
/// same heads with the same params produce bit-identical totals.
#[derive(Debug, Clone)]
pub struct Scope<'a> {
    layers: Vec<Vec<&'a PreparedHead>>,
    rows: usize,
    n: usize,
}

impl<'a> Scope<'a> {
    pub fn new(layers: Vec<Vec<&'a PreparedHead>>) -> Result<Self> {
        let mut n = None;
        let mut rows = 0;
        for h in layers.iter().flatten() {
            if *n.get_or_insert(h.n) != h.n {
                return Err(Error::Schema("heads in a scope must share n".into()));
            }
            rows += h.rows();
        }
        let n = n.ok_or(Error::EmptyRow)?;
        if rows == 0 {
            return Err(Error::EmptyRow);
        }
        Ok(Self { layers, rows, n })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total_kl(&self, params: &HeadParams, scratch: &mut ObjectiveScratch) -> Result<f64> {
        let mut total = 0.0;
        for layer in &self.layers {
            let mut sub = 0.0;
            for h in layer {
                sub += h.total_kl(params, scratch)?;
            }
            total += sub;
        }
        Ok(total)
    }
}

/// Nested total for heads that each carry their own params, summed with the
/// same association as [`Scope::total_kl`].
pub fn assigned_total_kl(layers: &[Vec<(&PreparedHead, HeadParams)>]) -> Result<f64> {
    let mut scratch = ObjectiveScratch::default();
    let mut total = 0.0;
    for layer in layers {
        let mut sub = 0.0;
        for (h, params) in layer {
            sub += h.total_kl(params, &mut scratch)?;
        }
        total += sub;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_head, HeadSpec};

    const WORKED_KL: f64 = 0.700_103_007_375_032_7;

    #[test]
    fn worked_row_objective() {
        let kl = objective_kl(&[[10i8, 8, 5, -20]], &HeadParams::new(500, 16, 25), 1.0).unwrap();
        assert!((kl - WORKED_KL).abs() < 1e-14, "{kl}");
    }

    #[test]
    fn constant_rows_score_zero() {
        let rows = vec![vec![3i8; 64], vec![-100; 64]];
        let kl = objective_kl(&rows, &HeadParams::new(300, 4, 60), 0.1).unwrap();
        assert!(kl.abs() < 1e-15);
    }

    #[test]
    fn duplicated_rows_leave_mean_unchanged() {
        let head = gen_head(&HeadSpec {
            head_id: 0,
            temperature: 1.0,
            rows: 1,
            n: 64,
            seed: 3,
        })
        .unwrap();
        let row = head.row(0).to_vec();
        let params = HeadParams::new(300, 4, 60);
        let one = objective_kl(std::slice::from_ref(&row), &params, head.scale).unwrap();
        let two = objective_kl(&[row.clone(), row], &params, head.scale).unwrap();
        assert!((one - two).abs() <= 1e-15 * one);
    }

    #[test]
    fn infeasible_params_error() {
        let err = objective_kl(&[[1i8; 64]], &HeadParams::new(600, 4, 60), 1.0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleParams(_)));
        assert!(err.to_string().contains("n·B ≤ 32767"));
    }

    #[test]
    fn prepared_matches_reference() {
        for (t, seed) in [(0.25, 1), (1.0, 2), (8.0, 3)] {
            let head = gen_head(&HeadSpec {
                head_id: 0,
                temperature: t,
                rows: 16,
                n: 64,
                seed,
            })
            .unwrap();
            let prepared = PreparedHead::from_record(&head).unwrap();
            let rows: Vec<&[i8]> = head.rows().collect();
            for params in [
                HeadParams::new(511, 1, 8),
                HeadParams::new(300, 4, 60),
                HeadParams::new(500, 3, 127),
            ] {
                let fast = prepared.mean_kl(&params).unwrap();
                let slow = objective_kl(&rows, &params, head.scale).unwrap();
                assert!(
                    (fast - slow).abs() < 1e-12,
                    "t={t} {params}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn scope_nesting_is_consistent() {
        let heads: Vec<PreparedHead> = (0..3)
            .map(|i| {
                let h = gen_head(&HeadSpec {
                    head_id: i,
                    temperature: 1.0 + f64::from(i),
                    rows: 4,
                    n: 32,
                    seed: 9 + u64::from(i),
                })
                .unwrap();
                PreparedHead::from_record(&h).unwrap()
            })
            .collect();
        let params = HeadParams::new(600, 2, 100);
        let scope = Scope::new(vec![vec![&heads[0], &heads[1]], vec![&heads[2]]]).unwrap();
        let mut scratch = ObjectiveScratch::default();
        let a = scope.total_kl(&params, &mut scratch).unwrap();
        let b = assigned_total_kl(&[
            vec![(&heads[0], params), (&heads[1], params)],
            vec![(&heads[2], params)],
        ])
        .unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(scope.rows(), 12);
    }
}
