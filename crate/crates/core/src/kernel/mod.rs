//! Bit-exact integer surrogate softmax.
//!
//! A row goes through five stages: max reduction, clamped unsigned distance,
//! affine score, 32-bit sum, and reciprocal normalization. No stage touches
//! floating point.

mod row;
mod tile;
mod types;

pub use row::{
    affine_scores, affine_scores_into, clamped_distances, clamped_distances_into, hccs_row,
    hccs_row_into, normalize, normalize_into, reciprocal_clb, reciprocal_for, reciprocal_q0,
    reciprocal_u8, row_max, row_sum, RowScratch, RowStats,
};
pub use tile::{hccs_tile, LogitTile, ParamsTable, ProbTile};
pub use types::{
    HeadParams, LogitRow, OutputMode, ProbRow, D_MAX_LIMIT, T_I16, T_U8, U8_RECIP_SHIFT, U8_Z_FLOOR,
};
