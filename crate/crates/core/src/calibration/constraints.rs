use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::{HeadParams, D_MAX_LIMIT, T_I16, U8_Z_FLOOR};

/// Inclusive interval of admissible intercepts for fixed `(n, S, D_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityBand {
    pub b_lo: i32,
    pub b_hi: i32,
}

impl FeasibilityBand {
    pub fn is_empty(&self) -> bool {
        self.b_lo > self.b_hi
    }

    pub fn contains(&self, b: i32) -> bool {
        self.b_lo <= b && b <= self.b_hi
    }
}

/// `S*D_max + ceil(256/n) <= B <= floor(32767/n)`.
///
/// The lower edge keeps every row sum at or above the 8-bit path floor; the
/// upper edge keeps the row sum within the 16-bit output scale.
pub fn feasibility_band(n: usize, s: i16, d_max: u8) -> FeasibilityBand {
    assert!(n >= 1, "row length must be positive");
    let n = n as i64;
    let floor = (i64::from(U8_Z_FLOOR) + n - 1) / n;
    let b_lo = i64::from(s) * i64::from(d_max) + floor;
    let b_hi = i64::from(T_I16) / n;
    FeasibilityBand {
        b_lo: b_lo.min(i64::from(i32::MAX)) as i32,
        b_hi: b_hi as i32,
    }
}

/// One failed admissibility check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Violation {
    NegativeSlope,
    NonPositiveIntercept,
    ZeroClamp,
    /// `D_max <= 127`
    ClampRange,
    /// `B - S*D_max >= 0`
    NegativeScores,
    /// `B <= 32767`
    ScoreStorage,
    /// `n*(B - S*D_max) >= 256`
    RowSumFloor,
    /// `n*B <= 32767`
    RowSumCeiling,
}

impl Violation {
    pub fn code(self) -> &'static str {
        match self {
            Violation::NegativeSlope => "negative_slope",
            Violation::NonPositiveIntercept => "non_positive_intercept",
            Violation::ZeroClamp => "zero_clamp",
            Violation::ClampRange => "clamp_range",
            Violation::NegativeScores => "negative_scores",
            Violation::ScoreStorage => "score_storage",
            Violation::RowSumFloor => "z_floor",
            Violation::RowSumCeiling => "z_ceiling",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::NegativeSlope => "S ≥ 0",
            Violation::NonPositiveIntercept => "B > 0",
            Violation::ZeroClamp => "D_max ≥ 1",
            Violation::ClampRange => "D_max ≤ 127",
            Violation::NegativeScores => "B − S·D_max ≥ 0",
            Violation::ScoreStorage => "B ≤ 32767",
            Violation::RowSumFloor => "Z floor: n·(B − S·D_max) ≥ 256",
            Violation::RowSumCeiling => "n·B ≤ 32767",
        })
    }
}

impl Serialize for Violation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Outcome of [`validate_params`]; violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Validation {
    pub n: usize,
    #[serde(flatten)]
    pub params: HeadParams,
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.ok
    }

    pub fn has(&self, v: Violation) -> bool {
        self.violations.contains(&v)
    }
}

/// Checks the integer range constraints for rows of length `n`.
pub fn validate_params(params: &HeadParams, n: usize) -> Validation {
    let b = i64::from(params.b);
    let s = i64::from(params.s);
    let d = i64::from(params.d_max);
    let n_wide = n as i64;
    let floor = b - s * d;

    let mut violations = Vec::new();
    let mut check = |ok: bool, v: Violation| {
        if !ok {
            violations.push(v);
        }
    };
    check(s >= 0, Violation::NegativeSlope);
    check(b > 0, Violation::NonPositiveIntercept);
    check(d >= 1, Violation::ZeroClamp);
    check(d <= i64::from(D_MAX_LIMIT), Violation::ClampRange);
    check(floor >= 0, Violation::NegativeScores);
    check(b <= i64::from(T_I16), Violation::ScoreStorage);
    check(
        n_wide * floor >= i64::from(U8_Z_FLOOR),
        Violation::RowSumFloor,
    );
    check(n_wide * b <= i64::from(T_I16), Violation::RowSumCeiling);

    Validation {
        n,
        params: *params,
        ok: violations.is_empty(),
        violations,
    }
}
