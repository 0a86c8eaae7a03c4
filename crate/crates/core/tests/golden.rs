use hccs_core::calibration::objective_kl;
use hccs_core::kernel::*;
use hccs_core::oracle::{entropy, hccs_wide_oracle, kl_divergence, softmax_exact, ProbVector};
use serde_json::Value;

fn golden() -> Value {
    serde_json::from_str(include_str!("fixtures/golden.json")).unwrap()
}

fn ints<T: TryFrom<i64>>(v: &Value) -> Vec<T>
where
    T::Error: std::fmt::Debug,
{
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| T::try_from(x.as_i64().unwrap()).unwrap())
        .collect()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn params(g: &Value) -> HeadParams {
    serde_json::from_value(g["params"].clone()).unwrap()
}

#[test]
fn stages_match_fixture() {
    let g = golden();
    let x: Vec<i8> = ints(&g["x"]);
    let p = params(&g);
    let m = row_max(&x).unwrap();
    let d = clamped_distances(&x, m, p.d_max);
    assert_eq!(d, ints::<u8>(&g["distances"]));
    let s = affine_scores(&d, &p).unwrap();
    assert_eq!(s, ints::<i16>(&g["scores"]));
    assert_eq!(i64::from(row_sum(&s).unwrap()), g["z"].as_i64().unwrap());
}

#[test]
fn outputs_match_fixture_and_oracle() {
    let g = golden();
    let x: Vec<i8> = ints(&g["x"]);
    let p = params(&g);
    for (key, mode) in [
        ("i16_div", OutputMode::I16Div),
        ("u8_div", OutputMode::U8Div { out_shift: 0 }),
    ] {
        let row = hccs_row(&x, &p, mode).unwrap();
        let want = &g[key];
        assert_eq!(row.p, ints::<u16>(&want["p"]), "{key}");
        assert_eq!(i64::from(row.rho), want["rho"].as_i64().unwrap(), "{key}");
        assert_eq!(i64::from(row.sum()), want["sum"].as_i64().unwrap(), "{key}");
        assert_eq!(hccs_wide_oracle(&x, &p, mode).unwrap(), row, "{key}");
    }
    let clb = hccs_row(&x, &p, OutputMode::I16Clb).unwrap();
    assert_eq!(i64::from(clb.rho), g["i16_clb"]["rho"].as_i64().unwrap());
}

#[test]
fn metrics_match_fixture() {
    let g = golden();
    let x: Vec<i8> = ints(&g["x"]);
    let xf: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
    let sm = softmax_exact(&xf).unwrap();
    for (got, want) in sm.as_slice().iter().zip(floats(&g["softmax"])) {
        assert!((got - want).abs() <= 1e-14 * want, "{got} vs {want}");
    }
    let h = entropy(&sm);
    assert!((h - g["entropy_nats"].as_f64().unwrap()).abs() < 1e-14);

    let q =
        ProbVector::from_prob_row(&hccs_row(&x, &params(&g), OutputMode::I16Div).unwrap()).unwrap();
    let kl = kl_divergence(&sm, &q).unwrap();
    let want = g["kl_nats"].as_f64().unwrap();
    assert!((kl - want).abs() < 1e-14, "{kl} vs {want}");
    let obj = objective_kl(&[x], &params(&g), 1.0).unwrap();
    assert!((obj - want).abs() < 1e-14);
}
