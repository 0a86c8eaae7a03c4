//! Head-calibrated clipped-linear softmax: an integer-only surrogate for
//! attention softmax, its offline calibration, and the reference metrics
//! used to judge it.

pub mod calibration;
pub mod data;
pub mod error;
pub mod fidelity;
pub mod kernel;
pub mod oracle;

pub use calibration::{
    calibrate, default_params, feasibility_band, grid_search, objective_kl, validate_params,
    CalibrationReport, FeasibilityBand, Granularity, GridSpec, Validation, Violation,
};
pub use error::{Error, Result};
pub use fidelity::{evaluate, probability_curve, FidelityReport, HeadFidelity, HeadLabel};
pub use kernel::{
    hccs_row, hccs_tile, HeadParams, LogitRow, LogitTile, OutputMode, ParamsTable, ProbRow,
    ProbTile,
};
pub use oracle::{hccs_wide_oracle, ProbVector};
