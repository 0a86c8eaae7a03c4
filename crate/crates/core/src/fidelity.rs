//! How closely the surrogate tracks exact softmax on a dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CalibrationDataset, CurvePoint, HeadRecord, ParamsFile};
use crate::error::{Error, Result};
use crate::kernel::{hccs_row, HeadParams, OutputMode, ProbRow, T_I16, T_U8};
use crate::oracle::{dequantize, entropy, kl_divergence, softmax_exact, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadLabel {
    Broad,
    Intermediate,
    Focused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadFidelity {
    pub layer: usize,
    pub head_id: u16,
    pub params: HeadParams,
    pub rows: usize,
    /// Mean KL over rows where the surrogate covers the softmax support.
    /// `None` when no row does, which only happens on the 8-bit paths.
    pub kl_nats: Option<f64>,
    /// Rows excluded from `kl_nats` because some output truncated to zero.
    pub unsupported_rows: usize,
    /// Mean entropy of the exact softmax rows.
    pub entropy_nats: f64,
    pub entropy_rank: usize,
    pub label: HeadLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub mode: OutputMode,
    pub n: usize,
    pub heads: Vec<HeadFidelity>,
    /// Row-weighted mean of the per-head KL sums over supported rows.
    pub mean_kl_nats: Option<f64>,
    /// Rows breaking the normalization bound of `mode`. `None` for modes
    /// without one.
    pub sum_bound_violations: Option<usize>,
}

impl FidelityReport {
    pub fn head(&self, head_id: u16) -> Option<&HeadFidelity> {
        self.heads.iter().find(|h| h.head_id == head_id)
    }
}

struct HeadStats {
    kl_sum: f64,
    kl_rows: usize,
    entropy_sum: f64,
    bound_violations: usize,
}

/// `T - Z < sum <= T` for exact 16-bit division; `|sum - 255| <= n + 1`
/// for unshifted 8-bit division.
fn sum_bound_holds(out: &ProbRow, n: usize) -> Option<bool> {
    let sum = i64::from(out.sum());
    match out.mode {
        OutputMode::I16Div => {
            Some(sum <= i64::from(T_I16) && sum > i64::from(T_I16) - i64::from(out.z))
        }
        OutputMode::U8Div { out_shift: 0 } => Some((sum - i64::from(T_U8)).abs() <= n as i64 + 1),
        _ => None,
    }
}

fn head_stats(head: &HeadRecord, params: &HeadParams, mode: OutputMode) -> Result<HeadStats> {
    let mut s = HeadStats {
        kl_sum: 0.0,
        kl_rows: 0,
        entropy_sum: 0.0,
        bound_violations: 0,
    };
    for x in head.rows() {
        let p = softmax_exact(&dequantize(x, head.scale)?)?;
        s.entropy_sum += entropy(&p);
        let out = hccs_row(x, params, mode)?;
        if sum_bound_holds(&out, x.len()) == Some(false) {
            s.bound_violations += 1;
        }
        if out.sum() == 0 {
            continue;
        }
        match kl_divergence(&p, &ProbVector::from_prob_row(&out)?) {
            Ok(kl) => {
                s.kl_sum += kl;
                s.kl_rows += 1;
            }
            Err(Error::SupportMismatch(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(s)
}

/// Per-head KL and entropy for `dataset` under `params` and `mode`.
///
/// Heads are ranked by mean softmax entropy (rank 0 is the flattest). The
/// top half is labelled broad, the bottom half focused, and the middle head
/// of an odd count intermediate.
pub fn evaluate(
    dataset: &CalibrationDataset,
    params: &ParamsFile,
    mode: OutputMode,
) -> Result<FidelityReport> {
    let table = params.table_for(dataset)?;
    let heads: Vec<(usize, &HeadRecord)> =
        dataset.heads().filter(|(_, h)| h.row_count() > 0).collect();
    let stats = heads
        .par_iter()
        .map(|(_, h)| head_stats(h, &table[&u32::from(h.head_id)], mode))
        .collect::<Result<Vec<_>>>()?;

    let mut out: Vec<HeadFidelity> = heads
        .iter()
        .zip(&stats)
        .map(|((layer, h), s)| HeadFidelity {
            layer: *layer,
            head_id: h.head_id,
            params: table[&u32::from(h.head_id)],
            rows: h.row_count(),
            kl_nats: (s.kl_rows > 0).then(|| s.kl_sum / s.kl_rows as f64),
            unsupported_rows: h.row_count() - s.kl_rows,
            entropy_nats: s.entropy_sum / h.row_count() as f64,
            entropy_rank: 0,
            label: HeadLabel::Intermediate,
        })
        .collect();

    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| {
        out[b]
            .entropy_nats
            .total_cmp(&out[a].entropy_nats)
            .then(a.cmp(&b))
    });
    let count = out.len();
    for (rank, &i) in order.iter().enumerate() {
        out[i].entropy_rank = rank;
        out[i].label = if 2 * rank + 1 < count {
            HeadLabel::Broad
        } else if 2 * rank + 1 > count {
            HeadLabel::Focused
        } else {
            HeadLabel::Intermediate
        };
    }

    let kl_rows: usize = stats.iter().map(|s| s.kl_rows).sum();
    let mean_kl_nats =
        (kl_rows > 0).then(|| stats.iter().map(|s| s.kl_sum).sum::<f64>() / kl_rows as f64);
    let has_bound = matches!(
        mode,
        OutputMode::I16Div | OutputMode::U8Div { out_shift: 0 }
    );
    Ok(FidelityReport {
        mode,
        n: dataset.n(),
        heads: out,
        mean_kl_nats,
        sum_bound_violations: has_bound.then(|| stats.iter().map(|s| s.bound_violations).sum()),
    })
}

/// Mean probability by rank for one head: position 0 is each row's largest
/// logit. Ties keep their original column order.
pub fn probability_curve(
    head: &HeadRecord,
    params: &HeadParams,
    mode: OutputMode,
) -> Result<Vec<CurvePoint>> {
    let n = head.n();
    let rows = head.row_count();
    if rows == 0 {
        return Err(Error::EmptyRow);
    }
    let mut soft = vec![0.0; n];
    let mut hccs = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for x in head.rows() {
        let p = softmax_exact(&dequantize(x, head.scale)?)?;
        let q = ProbVector::from_prob_row(&hccs_row(x, params, mode)?)?;
        order.sort_by(|&a, &b| x[b].cmp(&x[a]).then(a.cmp(&b)));
        for (rank, &i) in order.iter().enumerate() {
            soft[rank] += p.as_slice()[i];
            hccs[rank] += q.as_slice()[i];
        }
    }
    Ok((0..n)
        .map(|rank| CurvePoint {
            rank,
            head_id: u32::from(head.head_id),
            softmax_prob: soft[rank] / rows as f64,
            hccs_prob: hccs[rank] / rows as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::default_params;
    use crate::data::{gen_head, HeadSpec, LayerRecord};

    fn dataset(temps: &[f64]) -> CalibrationDataset {
        let heads = temps
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                gen_head(&HeadSpec {
                    head_id: i as u16,
                    temperature: t,
                    rows: 16,
                    n: 32,
                    seed: 7 + i as u64,
                })
                .unwrap()
            })
            .collect();
        CalibrationDataset::new(vec![LayerRecord { heads }]).unwrap()
    }

    #[test]
    fn labels_follow_entropy() {
        let ds = dataset(&[0.25, 8.0, 1.0]);
        let pf = ParamsFile::uniform(32, default_params(32).unwrap());
        let r = evaluate(&ds, &pf, OutputMode::I16Div).unwrap();
        assert_eq!(r.head(1).unwrap().label, HeadLabel::Broad);
        assert_eq!(r.head(1).unwrap().entropy_rank, 0);
        assert_eq!(r.head(2).unwrap().label, HeadLabel::Intermediate);
        assert_eq!(r.head(0).unwrap().label, HeadLabel::Focused);
        assert!(r
            .heads
            .iter()
            .all(|h| h.kl_nats.is_some() && h.unsupported_rows == 0));
        assert_eq!(r.sum_bound_violations, Some(0));
        let clb = evaluate(&ds, &pf, OutputMode::I16Clb).unwrap();
        assert_eq!(clb.sum_bound_violations, None);
    }

    #[test]
    fn mean_is_row_weighted() {
        let ds = dataset(&[0.5, 4.0]);
        let pf = ParamsFile::uniform(32, default_params(32).unwrap());
        let r = evaluate(&ds, &pf, OutputMode::I16Div).unwrap();
        let avg = r.heads.iter().map(|h| h.kl_nats.unwrap()).sum::<f64>() / 2.0;
        assert!((r.mean_kl_nats.unwrap() - avg).abs() < 1e-12);
    }

    #[test]
    fn n_mismatch_and_missing_heads() {
        let ds = dataset(&[1.0]);
        let pf = ParamsFile::uniform(64, default_params(64).unwrap());
        assert!(matches!(
            evaluate(&ds, &pf, OutputMode::I16Div),
            Err(Error::Schema(_))
        ));
        let mut pf = ParamsFile::uniform(32, default_params(32).unwrap());
        pf.entries[0].layer = 5;
        pf.entries[0].head = -1;
        assert!(matches!(
            evaluate(&ds, &pf, OutputMode::I16Div),
            Err(Error::UnknownHead(0))
        ));
    }

    #[test]
    fn curve_shape() {
        let ds = dataset(&[2.0]);
        let head = &ds.layers()[0].heads[0];
        let pts =
            probability_curve(head, &default_params(32).unwrap(), OutputMode::I16Div).unwrap();
        assert_eq!(pts.len(), 32);
        let total: f64 = pts.iter().map(|p| p.softmax_prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let total: f64 = pts.iter().map(|p| p.hccs_prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for w in pts.windows(2) {
            assert!(w[0].softmax_prob >= w[1].softmax_prob);
            assert!(w[0].hccs_prob >= w[1].hccs_prob);
        }
    }
}
