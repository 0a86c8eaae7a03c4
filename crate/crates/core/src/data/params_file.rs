use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CalibrationDataset;
use super::{read_json, write_json};
use crate::calibration::Granularity;
use crate::error::{Error, Result};
use crate::kernel::{HeadParams, ParamsTable, D_MAX_LIMIT};

/// Calibrated constants for one scope. `layer`/`head` of -1 mean "any".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsEntry {
    pub layer: i32,
    pub head: i32,
    #[serde(flatten)]
    pub params: HeadParams,
    /// Calibration KL for the scope; `None` for hand-written entries.
    pub kl_nats: Option<f64>,
}

/// Parameter table as exchanged between `calibrate`, `apply`, `eval` and `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub n: usize,
    pub granularity: Granularity,
    pub entries: Vec<ParamsEntry>,
}

impl ParamsFile {
    /// Most specific entry for a head: exact match, then its layer, then global.
    pub fn resolve(&self, layer: usize, head_id: u16) -> Option<HeadParams> {
        let (layer, head) = (layer as i32, i32::from(head_id));
        let find = |l: i32, h: i32| {
            self.entries
                .iter()
                .find(|e| e.layer == l && e.head == h)
                .map(|e| e.params)
        };
        find(layer, head)
            .or_else(|| find(layer, -1))
            .or_else(|| find(-1, -1))
    }

    /// One global entry applying `params` everywhere.
    pub fn uniform(n: usize, params: HeadParams) -> Self {
        Self {
            n,
            granularity: Granularity::Global,
            entries: vec![ParamsEntry {
                layer: -1,
                head: -1,
                params,
                kl_nats: None,
            }],
        }
    }

    /// Kernel lookup table for every head in `dataset`. Fails on a head with
    /// no entry, or on a head id reused across layers with different params.
    pub fn table_for(&self, dataset: &CalibrationDataset) -> Result<ParamsTable> {
        if self.n != dataset.n() {
            return Err(Error::Schema(format!(
                "params calibrated for n={} but dataset has n={}",
                self.n,
                dataset.n()
            )));
        }
        let mut table = ParamsTable::new();
        for (layer, head) in dataset.heads() {
            let id = u32::from(head.head_id);
            let p = self
                .resolve(layer, head.head_id)
                .ok_or(Error::UnknownHead(id))?;
            if table.insert(id, p).is_some_and(|prev| prev != p) {
                return Err(Error::Schema(format!(
                    "head id {id} appears in several layers with different params"
                )));
            }
        }
        Ok(table)
    }
}

// Wide integer mirror used to report out-of-range values by name instead of
// as opaque deserialization failures.
#[derive(Deserialize)]
struct RawEntry {
    layer: i64,
    head: i64,
    #[serde(rename = "B")]
    b: i64,
    #[serde(rename = "S")]
    s: i64,
    #[serde(rename = "D_max")]
    d_max: i64,
    #[serde(default)]
    kl_nats: Option<f64>,
}

#[derive(Deserialize)]
struct RawFile {
    n: i64,
    granularity: Granularity,
    entries: Vec<RawEntry>,
}

fn check_entry(i: usize, e: &RawEntry) -> Result<ParamsEntry> {
    let bad = |what: &str| Err(Error::Schema(format!("entry {i}: {what}")));
    if e.d_max > i64::from(D_MAX_LIMIT) {
        return bad("D_max ≤ 127");
    }
    if e.d_max < 1 {
        return bad("D_max ≥ 1");
    }
    if e.b > 32767 {
        return bad("B ≤ 32767");
    }
    if e.b < 1 {
        return bad("B > 0");
    }
    if !(0..=32767).contains(&e.s) {
        return bad("0 ≤ S ≤ 32767");
    }
    if e.layer < -1 || e.layer > i64::from(u16::MAX) || e.head < -1 || e.head > i64::from(u16::MAX)
    {
        return bad("layer and head must be -1 or a u16 index");
    }
    if e.layer == -1 && e.head != -1 {
        return bad("a head-specific entry needs a layer");
    }
    Ok(ParamsEntry {
        layer: e.layer as i32,
        head: e.head as i32,
        params: HeadParams::new(e.b as i16, e.s as i16, e.d_max as u8),
        kl_nats: e.kl_nats,
    })
}

pub fn read_params(path: impl AsRef<Path>) -> Result<ParamsFile> {
    let raw: RawFile = read_json(path)?;
    if raw.n < 1 || raw.n > i64::from(u16::MAX) {
        return Err(Error::Schema(format!(
            "n must be in [1, 65535], got {}",
            raw.n
        )));
    }
    let entries = raw
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| check_entry(i, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamsFile {
        n: raw.n as usize,
        granularity: raw.granularity,
        entries,
    })
}

pub fn write_params(path: impl AsRef<Path>, file: &ParamsFile) -> Result<()> {
    write_json(path, file)
}
