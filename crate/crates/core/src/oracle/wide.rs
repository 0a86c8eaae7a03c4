use crate::error::{Error, Result};
use crate::kernel::{HeadParams, OutputMode, ProbRow};

/// Straight transcription of the single-row surrogate in 64-bit integers.
///
/// Shares no code with the kernel; used for differential testing and as the
/// wide shadow in overflow checks. Deliberately unoptimized.
pub fn hccs_wide_oracle(x: &[i8], params: &HeadParams, mode: OutputMode) -> Result<ProbRow> {
    if x.is_empty() {
        return Err(Error::EmptyRow);
    }
    let b = params.b as i64;
    let s = params.s as i64;
    let d_max = params.d_max as i64;
    if !(s >= 0 && b > 0 && (1..=127).contains(&d_max) && b - s * d_max >= 0) {
        return Err(Error::InfeasibleParams(format!("{params}")));
    }

    let mut m = x[0] as i64;
    for &v in x {
        if (v as i64) > m {
            m = v as i64;
        }
    }

    let mut scores: Vec<i64> = Vec::with_capacity(x.len());
    for &v in x {
        let mut delta = m - v as i64;
        if delta > d_max {
            delta = d_max;
        }
        scores.push(b - s * delta);
    }

    let mut z: i64 = 0;
    for &sc in &scores {
        z += sc;
    }
    if z > i32::MAX as i64 {
        return Err(Error::RowSumOverflow);
    }

    let u8_scale: i64 = 255 * 32768;
    let rho: i64 = match mode {
        OutputMode::I16Div => {
            if z <= 0 {
                return Err(Error::DegenerateRowSum(z as i32));
            }
            32767 / z
        }
        OutputMode::I16Clb => {
            if z <= 0 {
                return Err(Error::DegenerateRowSum(z as i32));
            }
            32767 / pow2_floor(z)
        }
        OutputMode::U8Div { .. } => {
            if z < 256 {
                return Err(Error::BelowU8Floor(z as i32));
            }
            u8_scale / z
        }
        OutputMode::U8Clb { .. } => {
            if z < 256 {
                return Err(Error::BelowU8Floor(z as i32));
            }
            u8_scale / pow2_floor(z)
        }
    };

    let mut p = Vec::with_capacity(x.len());
    for &sc in &scores {
        let v = match mode {
            OutputMode::I16Div | OutputMode::I16Clb => sc * rho,
            OutputMode::U8Div { out_shift } => (sc * rho) / (1i64 << (15 + out_shift as u32)),
            OutputMode::U8Clb { out_shift } => {
                let v = (sc * rho) / (1i64 << (15 + out_shift as u32));
                if v > 255 {
                    255
                } else {
                    v
                }
            }
        };
        p.push(v as u16);
    }

    Ok(ProbRow {
        p,
        z: z as i32,
        rho: rho as i32,
        mode,
    })
}

/// Largest power of two not exceeding `z` (z >= 1), found by doubling.
fn pow2_floor(z: i64) -> i64 {
    let mut p = 1i64;
    while p * 2 <= z {
        p *= 2;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let params = HeadParams::new(500, 16, 25);
        let r = hccs_wide_oracle(&[10, 8, 5, -20], &params, OutputMode::I16Div).unwrap();
        assert_eq!(r.p, vec![11000, 10296, 9240, 2200]);
        assert_eq!((r.z, r.rho), (1488, 22));
        let r = hccs_wide_oracle(
            &[10, 8, 5, -20],
            &params,
            OutputMode::U8Div { out_shift: 0 },
        )
        .unwrap();
        assert_eq!(r.p, vec![85, 80, 71, 17]);
        assert_eq!(r.rho, 5615);
    }

    #[test]
    fn pow2_floor_examples() {
        assert_eq!(pow2_floor(1), 1);
        assert_eq!(pow2_floor(1024), 1024);
        assert_eq!(pow2_floor(1488), 1024);
        assert_eq!(pow2_floor(32767), 16384);
    }

    #[test]
    fn error_cases() {
        let params = HeadParams::new(100, 5, 30);
        assert!(matches!(
            hccs_wide_oracle(&[1], &params, OutputMode::I16Div),
            Err(Error::InfeasibleParams(_))
        ));
        assert!(matches!(
            hccs_wide_oracle(&[], &HeadParams::new(100, 1, 10), OutputMode::I16Div),
            Err(Error::EmptyRow)
        ));
    }
}
