use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Mean probability at a given rank (0 = largest logit) for one head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rank: usize,
    pub head_id: u32,
    pub softmax_prob: f64,
    pub hccs_prob: f64,
}

/// CSV with header `rank,head_id,softmax_prob,hccs_prob`.
pub fn write_curves(path: impl AsRef<Path>, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if points.is_empty() {
        w.write_record(["rank", "head_id", "softmax_prob", "hccs_prob"])?;
    }
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curves(path: impl AsRef<Path>) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
