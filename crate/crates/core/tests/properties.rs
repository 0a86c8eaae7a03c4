use hccs_core::calibration::{feasibility_band, validate_params};
use hccs_core::kernel::*;
use hccs_core::oracle::{entropy, hccs_wide_oracle, kl_divergence, softmax_exact, ProbVector};
use proptest::prelude::*;

fn feasible(n: usize) -> impl Strategy<Value = HeadParams> {
    (0i16..=64, 1u8..=127, any::<u16>()).prop_filter_map("empty band", move |(s, d, pick)| {
        let band = feasibility_band(n, s, d);
        if band.is_empty() {
            return None;
        }
        let b = band.b_lo + i32::from(pick) % (band.b_hi - band.b_lo + 1);
        Some(HeadParams::new(b as i16, s, d))
    })
}

fn case() -> impl Strategy<Value = (Vec<i8>, HeadParams)> {
    prop_oneof![
        Just(1usize),
        Just(4),
        Just(32),
        Just(64),
        Just(128),
        1usize..=160
    ]
    .prop_flat_map(|n| (prop::collection::vec(any::<i8>(), n), feasible(n)))
}

fn mode() -> impl Strategy<Value = OutputMode> {
    prop_oneof![
        Just(OutputMode::I16Div),
        Just(OutputMode::I16Clb),
        (0u8..=3).prop_map(|k| OutputMode::U8Div { out_shift: k }),
        (0u8..=3).prop_map(|k| OutputMode::U8Clb { out_shift: k }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn matches_wide_oracle((x, p) in case(), m in mode()) {
        prop_assert!(validate_params(&p, x.len()).is_ok());
        prop_assert_eq!(hccs_row(&x, &p, m).unwrap(), hccs_wide_oracle(&x, &p, m).unwrap());
    }

    #[test]
    fn ordering_is_preserved((x, p) in case(), m in mode()) {
        let out = hccs_row(&x, &p, m).unwrap();
        let top = *x.iter().max().unwrap();
        for i in 0..x.len() {
            for j in 0..x.len() {
                if x[i] >= x[j] {
                    prop_assert!(out.p[i] >= out.p[j]);
                }
                let (di, dj) = (i16::from(top) - i16::from(x[i]), i16::from(top) - i16::from(x[j]));
                if x[i] > x[j] && p.s > 0 && dj < i16::from(p.d_max) && m == OutputMode::I16Div {
                    prop_assert!(out.p[i] > out.p[j], "strict at {} {} (d {} {})", i, j, di, dj);
                }
            }
        }
    }

    #[test]
    fn scores_are_non_negative((x, p) in case()) {
        let m = row_max(&x).unwrap();
        let s = affine_scores(&clamped_distances(&x, m, p.d_max), &p).unwrap();
        prop_assert!(s.iter().all(|&v| v >= 0 && v >= p.b - p.s * i16::from(p.d_max)));
        let z = row_sum(&s).unwrap();
        let n = x.len() as i32;
        prop_assert!(z >= n * (i32::from(p.b) - i32::from(p.s) * i32::from(p.d_max)) && z <= n * i32::from(p.b));
    }

    #[test]
    fn i16_div_sum_bound((x, p) in case()) {
        let out = hccs_row(&x, &p, OutputMode::I16Div).unwrap();
        let sum = out.sum() as i32;
        prop_assert!(sum <= T_I16 && sum > T_I16 - out.z);
    }

    #[test]
    fn u8_div_sum_bound((x, p) in case()) {
        let out = hccs_row(&x, &p, OutputMode::U8Div { out_shift: 0 }).unwrap();
        prop_assert!((out.sum() as i64 - 255).abs() <= x.len() as i64 + 1);
        prop_assert!(out.p.iter().all(|&v| v <= 255));
    }

    #[test]
    fn clb_ratio((x, p) in case()) {
        let out = hccs_row(&x, &p, OutputMode::I16Clb).unwrap();
        let (rho, z, t) = (f64::from(out.rho), f64::from(out.z), f64::from(T_I16));
        prop_assert!(rho * z / t < 2.0);
        prop_assert!((rho + 1.0) * z / t >= 1.0);
        let u8 = hccs_row(&x, &p, OutputMode::U8Clb { out_shift: 0 }).unwrap();
        prop_assert!(u8.p.iter().all(|&v| v <= 255));
    }

    #[test]
    fn shift_invariance((x, p) in case(), c in -255i16..=255, m in mode()) {
        let lo = i16::from(*x.iter().min().unwrap());
        let hi = i16::from(*x.iter().max().unwrap());
        let c = c.clamp(-128 - lo, 127 - hi);
        let shifted: Vec<i8> = x.iter().map(|&v| (i16::from(v) + c) as i8).collect();
        prop_assert_eq!(hccs_row(&x, &p, m).unwrap(), hccs_row(&shifted, &p, m).unwrap());
    }

    #[test]
    fn tile_is_worker_invariant(
        rows in 1usize..40,
        cols in 1usize..80,
        seed in any::<u64>(),
        workers in 1usize..12,
        m in mode(),
    ) {
        let mut state = seed;
        let mut next = || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (state >> 33) as u32 };
        let data: Vec<i8> = (0..rows * cols).map(|_| next() as i8).collect();
        let ids: Vec<u32> = (0..rows).map(|_| next() % 3).collect();
        let mut table = ParamsTable::new();
        for (h, s) in [(0u32, 0i16), (1, 1), (2, 3)] {
            let band = feasibility_band(cols, s, 20);
            prop_assume!(!band.is_empty());
            table.insert(h, HeadParams::new(band.b_hi as i16, s, 20));
        }
        let tile = LogitTile::new(cols, data, ids).unwrap();
        let one = hccs_tile(&tile, &table, m, 1).unwrap();
        let many = hccs_tile(&tile, &table, m, workers).unwrap();
        prop_assert_eq!(&one, &many);
        for r in 0..tile.rows() {
            prop_assert_eq!(one.row(r), hccs_row(tile.row(r), &table[&tile.head_id(r)], m).unwrap());
        }
    }

    #[test]
    fn softmax_shift_invariant(x in prop::collection::vec(-50.0f64..50.0, 1..100), c in -100.0f64..100.0) {
        let a = softmax_exact(&x).unwrap();
        let b = softmax_exact(&x.iter().map(|v| v + c).collect::<Vec<_>>()).unwrap();
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((u - v).abs() < 1e-12);
        }
        prop_assert!((a.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn kl_and_entropy_bounds(
        w in prop::collection::vec(0.001f64..10.0, 1..80),
        v in prop::collection::vec(0.001f64..10.0, 80),
    ) {
        let p = ProbVector::from_weights(&w).unwrap();
        let q = ProbVector::from_weights(&v[..w.len()]).unwrap();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
        let h = entropy(&p);
        prop_assert!(h >= 0.0 && h <= (w.len() as f64).ln() + 1e-12);
    }
}

#[test]
fn adversarial_rows_match_wide_shadow() {
    for n in [1usize, 4, 32, 64, 128] {
        let rows: Vec<Vec<i8>> = vec![
            vec![-128; n],
            vec![127; n],
            (0..n)
                .map(|i| if i % 2 == 0 { 127 } else { -128 })
                .collect(),
            (0..n).map(|i| if i == 0 { 127 } else { -128 }).collect(),
        ];
        for s in [0i16, 1, 8, 64, 255] {
            for d in [1u8, 16, 64, 127] {
                let band = feasibility_band(n, s, d);
                if band.is_empty() {
                    continue;
                }
                for b in [band.b_lo, (band.b_lo + band.b_hi) / 2, band.b_hi] {
                    let p = HeadParams::new(b as i16, s, d);
                    for x in &rows {
                        for m in OutputMode::ALL {
                            assert_eq!(
                                hccs_row(x, &p, m).unwrap(),
                                hccs_wide_oracle(x, &p, m).unwrap(),
                                "n={n} {p} {m}"
                            );
                        }
                    }
                }
            }
        }
    }
}
