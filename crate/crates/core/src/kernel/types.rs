use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output scale for the 16-bit paths.
pub const T_I16: i32 = 32767;
/// Output scale for the 8-bit paths.
pub const T_U8: i32 = 255;
/// Fractional bits carried by the 8-bit path reciprocal.
pub const U8_RECIP_SHIFT: u32 = 15;
/// Largest clamp bound that still fits a signed 8-bit lane.
pub const D_MAX_LIMIT: u8 = 127;
/// Minimum row sum for the 8-bit reciprocal to fit in 16 bits.
pub const U8_Z_FLOOR: i32 = 256;

/// Per-head surrogate constants: intercept `b`, slope `s`, clamp bound `d_max`.
///
/// Scores are `b - s * min(distance, d_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HeadParams {
    #[serde(rename = "B")]
    pub b: i16,
    #[serde(rename = "S")]
    pub s: i16,
    #[serde(rename = "D_max")]
    pub d_max: u8,
}

impl HeadParams {
    pub const fn new(b: i16, s: i16, d_max: u8) -> Self {
        Self { b, s, d_max }
    }

    /// Smallest score any element can receive, `b - s * d_max`.
    pub fn score_floor(&self) -> i32 {
        i32::from(self.b) - i32::from(self.s) * i32::from(self.d_max)
    }

    /// Checks the row-length independent invariants the kernel relies on.
    pub fn check(&self) -> Result<()> {
        let why = if self.s < 0 {
            "S must be non-negative"
        } else if self.b <= 0 {
            "B must be positive"
        } else if self.d_max == 0 || self.d_max > D_MAX_LIMIT {
            "D_max must lie in [1, 127]"
        } else if self.score_floor() < 0 {
            "B - S*D_max must be non-negative"
        } else {
            return Ok(());
        };
        Err(Error::InfeasibleParams(format!("{self}: {why}")))
    }
}

impl fmt::Display for HeadParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(B={}, S={}, D_max={})", self.b, self.s, self.d_max)
    }
}

/// Normalization path: output width and reciprocal flavour.
///
/// `out_shift` applies to the 8-bit paths only and is an extra right shift
/// on top of [`U8_RECIP_SHIFT`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OutputMode {
    #[default]
    I16Div,
    U8Div {
        out_shift: u8,
    },
    /// Leading-bit reciprocal on the 16-bit path. Experimental.
    I16Clb,
    U8Clb {
        out_shift: u8,
    },
}

impl OutputMode {
    pub const ALL: [OutputMode; 4] = [
        OutputMode::I16Div,
        OutputMode::U8Div { out_shift: 0 },
        OutputMode::I16Clb,
        OutputMode::U8Clb { out_shift: 0 },
    ];

    /// Target integer scale `T`.
    pub fn scale(self) -> i32 {
        if self.is_u8() {
            T_U8
        } else {
            T_I16
        }
    }

    pub fn is_u8(self) -> bool {
        matches!(self, OutputMode::U8Div { .. } | OutputMode::U8Clb { .. })
    }

    pub fn is_clb(self) -> bool {
        matches!(self, OutputMode::I16Clb | OutputMode::U8Clb { .. })
    }

    pub fn out_shift(self) -> u8 {
        match self {
            OutputMode::U8Div { out_shift } | OutputMode::U8Clb { out_shift } => out_shift,
            _ => 0,
        }
    }

    /// Same mode with a different `out_shift`; no-op on 16-bit modes.
    pub fn with_out_shift(self, shift: u8) -> Self {
        match self {
            OutputMode::U8Div { .. } => OutputMode::U8Div { out_shift: shift },
            OutputMode::U8Clb { .. } => OutputMode::U8Clb { out_shift: shift },
            m => m,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutputMode::I16Div => "i16-div",
            OutputMode::U8Div { .. } => "u8-div",
            OutputMode::I16Clb => "i16-clb",
            OutputMode::U8Clb { .. } => "u8-clb",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            OutputMode::I16Div => 0,
            OutputMode::U8Div { .. } => 1,
            OutputMode::I16Clb => 2,
            OutputMode::U8Clb { .. } => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8, out_shift: u8) -> Option<Self> {
        Some(match tag {
            0 => OutputMode::I16Div,
            1 => OutputMode::U8Div { out_shift },
            2 => OutputMode::I16Clb,
            3 => OutputMode::U8Clb { out_shift },
            _ => return None,
        })
    }
}

impl fmt::Display for OutputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.out_shift() {
            0 => f.write_str(self.name()),
            k => write!(f, "{}>>{}", self.name(), k),
        }
    }
}

impl FromStr for OutputMode {
    type Err = Error;

    /// Accepts `i16-div`, `u8-div`, `i16-clb`, `u8-clb`, optionally suffixed
    /// with `>>k` for an 8-bit `out_shift`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase().replace('_', "-");
        let (name, shift) = match lower.split_once(">>") {
            Some((name, k)) => {
                let k: u8 = k
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad out_shift in mode '{s}'")))?;
                (name.to_string(), k)
            }
            None => (lower, 0),
        };
        if shift > 16 {
            return Err(Error::InvalidInput(format!("out_shift {shift} exceeds 16")));
        }
        let mode = match name.as_str() {
            "i16-div" => OutputMode::I16Div,
            "u8-div" => OutputMode::U8Div { out_shift: shift },
            "i16-clb" => OutputMode::I16Clb,
            "u8-clb" => OutputMode::U8Clb { out_shift: shift },
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown mode '{s}' (expected i16-div, u8-div, i16-clb or u8-clb)"
                )))
            }
        };
        if shift != 0 && !mode.is_u8() {
            return Err(Error::InvalidInput(format!(
                "out_shift only applies to u8 modes: '{s}'"
            )));
        }
        Ok(mode)
    }
}

impl Serialize for OutputMode {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OutputMode {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One row of 8-bit attention logits tagged with its head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogitRow {
    x: Vec<i8>,
    pub head_id: u32,
}

impl LogitRow {
    pub fn new(x: Vec<i8>, head_id: u32) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyRow);
        }
        Ok(Self { x, head_id })
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.x
    }

    pub fn into_inner(self) -> Vec<i8> {
        self.x
    }
}

impl Deref for LogitRow {
    type Target = [i8];

    fn deref(&self) -> &[i8] {
        &self.x
    }
}

/// Normalized integer probabilities for one row.
///
/// Values are at most 16 bits on the 16-bit paths and at most 255 on the
/// 8-bit paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbRow {
    pub p: Vec<u16>,
    /// Row sum of the surrogate scores.
    pub z: i32,
    /// Reciprocal actually applied.
    pub rho: i32,
    pub mode: OutputMode,
}

impl ProbRow {
    pub fn sum(&self) -> u32 {
        self.p.iter().map(|&v| u32::from(v)).sum()
    }
}
