//! Offline per-head, per-layer or global calibration of the surrogate
//! constants by exhaustive grid search over the admissible integer region.

mod constraints;
mod objective;
mod search;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use constraints::{feasibility_band, validate_params, FeasibilityBand, Validation, Violation};
pub use objective::{
    assigned_total_kl, objective_kl, ObjectiveScratch, PreparedHead, Scope, OBJECTIVE_MODE,
};
pub use search::{grid_search, search_scope, GridSpec, SearchOutcome};

use crate::data::{CalibrationDataset, ParamsEntry, ParamsFile};
use crate::error::{Error, Result};
use crate::kernel::{HeadParams, OutputMode};

/// Rows per head used for calibration unless overridden.
pub const DEFAULT_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    PerHead,
    PerLayer,
    Global,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [
        Granularity::PerHead,
        Granularity::PerLayer,
        Granularity::Global,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Granularity::PerHead => "per-head",
            Granularity::PerLayer => "per-layer",
            Granularity::Global => "global",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "per-head" | "head" => Ok(Granularity::PerHead),
            "per-layer" | "layer" => Ok(Granularity::PerLayer),
            "global" => Ok(Granularity::Global),
            _ => Err(Error::InvalidInput(format!(
                "unknown granularity '{s}' (expected per-head, per-layer or global)"
            ))),
        }
    }
}

/// Calibrated constants for one scope. `layer`/`head` are -1 when the scope
/// spans all layers/heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub layer: i32,
    pub head: i32,
    #[serde(flatten)]
    pub params: HeadParams,
    /// Mean KL over the scope's rows, nats.
    pub kl_nats: f64,
    pub samples: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub granularity: Granularity,
    pub n: usize,
    pub objective_mode: OutputMode,
    pub samples_per_head: usize,
    pub grid: GridSpec,
    pub entries: Vec<ReportEntry>,
    /// Mean KL over every calibration row, each scored with its scope's params.
    pub mean_kl_nats: f64,
}

impl CalibrationReport {
    pub fn to_params_file(&self) -> ParamsFile {
        ParamsFile {
            n: self.n,
            granularity: self.granularity,
            entries: self
                .entries
                .iter()
                .map(|e| ParamsEntry {
                    layer: e.layer,
                    head: e.head,
                    params: e.params,
                    kl_nats: Some(e.kl_nats),
                })
                .collect(),
        }
    }
}

/// Calibrates `dataset` at the requested granularity.
///
/// Each head contributes its first `samples` rows to every scope that
/// contains it, so finer scopes always see a subset of a coarser scope's
/// rows and the dataset-level KL cannot increase as scopes get finer.
pub fn calibrate(
    dataset: &CalibrationDataset,
    granularity: Granularity,
    grid: &GridSpec,
    samples: usize,
) -> Result<CalibrationReport> {
    if samples == 0 {
        return Err(Error::InvalidInput(
            "samples per head must be positive".into(),
        ));
    }
    grid.validate()?;

    // prepared[l][h] mirrors the dataset layout.
    let prepared: Vec<Vec<(u16, PreparedHead)>> = dataset
        .layers()
        .iter()
        .map(|layer| {
            layer
                .heads
                .iter()
                .filter(|h| h.row_count() > 0)
                .map(|h| Ok((h.head_id, PreparedHead::from_record(&h.truncated(samples))?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    let mut assigned: Vec<Vec<(&PreparedHead, HeadParams)>> = vec![Vec::new(); prepared.len()];
    let mut push = |layer: i32, head: i32, scope: &Scope<'_>, out: SearchOutcome| {
        entries.push(ReportEntry {
            layer,
            head,
            params: out.params,
            kl_nats: out.mean_kl,
            samples: scope.rows(),
            candidates: out.candidates,
        });
        out.params
    };

    match granularity {
        Granularity::PerHead => {
            for (l, heads) in prepared.iter().enumerate() {
                for (id, h) in heads {
                    let scope = Scope::new(vec![vec![h]])?;
                    let out = search_scope(&scope, grid)?;
                    let p = push(l as i32, i32::from(*id), &scope, out);
                    assigned[l].push((h, p));
                }
            }
        }
        Granularity::PerLayer => {
            for (l, heads) in prepared.iter().enumerate() {
                if heads.is_empty() {
                    continue;
                }
                let scope = Scope::new(vec![heads.iter().map(|(_, h)| h).collect()])?;
                let out = search_scope(&scope, grid)?;
                let p = push(l as i32, -1, &scope, out);
                assigned[l].extend(heads.iter().map(|(_, h)| (h, p)));
            }
        }
        Granularity::Global => {
            let scope = Scope::new(
                prepared
                    .iter()
                    .map(|heads| heads.iter().map(|(_, h)| h).collect())
                    .collect(),
            )?;
            let out = search_scope(&scope, grid)?;
            let p = push(-1, -1, &scope, out);
            for (l, heads) in prepared.iter().enumerate() {
                assigned[l].extend(heads.iter().map(|(_, h)| (h, p)));
            }
        }
    }

    let rows: usize = assigned.iter().flatten().map(|(h, _)| h.rows()).sum();
    let mean_kl_nats = assigned_total_kl(&assigned)? / rows as f64;

    Ok(CalibrationReport {
        granularity,
        n: dataset.n(),
        objective_mode: OBJECTIVE_MODE,
        samples_per_head: samples,
        grid: grid.clone(),
        entries,
        mean_kl_nats,
    })
}

/// Uncalibrated fallback: slope 1, the widest default-grid clamp up to 64
/// that still admits a band, and the largest admissible intercept.
///
/// Always a member of [`GridSpec::default`]'s candidate set.
pub fn default_params(n: usize) -> Result<HeadParams> {
    if n == 0 {
        return Err(Error::EmptyRow);
    }
    let grid = GridSpec::default();
    grid.d_values
        .iter()
        .rev()
        .filter(|&&d| d <= 64)
        .find_map(|&d| {
            let band = feasibility_band(n, 1, d);
            (!band.is_empty()).then(|| HeadParams::new(band.b_hi as i16, 1, d))
        })
        .ok_or_else(|| Error::InfeasibleParams(format!("no default params admit n={n}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_head, HeadSpec, LayerRecord};

    fn dataset(temps: &[&[f64]], rows: usize, n: usize) -> CalibrationDataset {
        let mut id = 0u16;
        let layers = temps
            .iter()
            .map(|layer| LayerRecord {
                heads: layer
                    .iter()
                    .map(|&t| {
                        id += 1;
                        gen_head(&HeadSpec {
                            head_id: id - 1,
                            temperature: t,
                            rows,
                            n,
                            seed: 100 + u64::from(id),
                        })
                        .unwrap()
                    })
                    .collect(),
            })
            .collect();
        CalibrationDataset::new(layers).unwrap()
    }

    fn small_grid() -> GridSpec {
        GridSpec {
            s_values: vec![1, 2, 4, 8],
            d_values: vec![16, 48, 96, 127],
            b_step: None,
        }
    }

    #[test]
    fn granularity_parsing() {
        for g in Granularity::ALL {
            assert_eq!(g.name().parse::<Granularity>().unwrap(), g);
        }
        assert!("sideways".parse::<Granularity>().is_err());
    }

    #[test]
    fn single_head_scopes_coincide() {
        let ds = dataset(&[&[1.0]], 16, 32);
        let reports: Vec<_> = Granularity::ALL
            .iter()
            .map(|&g| calibrate(&ds, g, &small_grid(), 64).unwrap())
            .collect();
        for r in &reports[1..] {
            assert_eq!(r.entries[0].params, reports[0].entries[0].params);
            assert_eq!(r.mean_kl_nats.to_bits(), reports[0].mean_kl_nats.to_bits());
        }
    }

    #[test]
    fn granularity_is_monotone() {
        let ds = dataset(&[&[0.5, 4.0], &[1.0, 8.0]], 16, 32);
        let kl: Vec<f64> = Granularity::ALL
            .iter()
            .map(|&g| calibrate(&ds, g, &small_grid(), 64).unwrap().mean_kl_nats)
            .collect();
        assert!(kl[0] <= kl[1] && kl[1] <= kl[2], "{kl:?}");
    }

    #[test]
    fn entries_are_feasible_and_counted() {
        let ds = dataset(&[&[0.5, 4.0], &[1.0, 8.0]], 10, 32);
        let per_head = calibrate(&ds, Granularity::PerHead, &small_grid(), 6).unwrap();
        assert_eq!(per_head.entries.len(), 4);
        assert!(per_head.entries.iter().all(|e| e.samples == 6));
        assert!(per_head
            .entries
            .iter()
            .all(|e| validate_params(&e.params, 32).is_ok()));
        let per_layer = calibrate(&ds, Granularity::PerLayer, &small_grid(), 6).unwrap();
        assert_eq!(per_layer.entries.len(), 2);
        assert_eq!(per_layer.entries[1].samples, 12);
        let global = calibrate(&ds, Granularity::Global, &small_grid(), 6).unwrap();
        assert_eq!((global.entries[0].layer, global.entries[0].head), (-1, -1));
        assert_eq!(global.entries[0].samples, 24);
    }

    #[test]
    fn report_is_deterministic() {
        let ds = dataset(&[&[0.5, 4.0]], 8, 32);
        let a = calibrate(&ds, Granularity::PerHead, &small_grid(), 64).unwrap();
        let b = calibrate(&ds, Granularity::PerHead, &small_grid(), 64).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn default_params_are_feasible_grid_members() {
        for n in [1usize, 4, 32, 64, 128, 256] {
            let p = default_params(n).unwrap();
            assert!(validate_params(&p, n).is_ok(), "n={n} {p}");
            assert!(GridSpec::default().candidates(n).contains(&p), "n={n} {p}");
        }
        assert_eq!(default_params(64).unwrap(), HeadParams::new(511, 1, 64));
        assert!(default_params(40_000).is_err());
    }
}
