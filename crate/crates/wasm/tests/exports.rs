use fsm_placer_wasm::{curves_json, sweep_json, twin_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn curves_follow_exponential_decay() {
    let c = parse(curves_json("linear-decay", 2.0, -1.0).unwrap());
    let t = c["t"].as_array().unwrap();
    assert!(t.len() > 300);
    for (i, ti) in t.iter().enumerate().step_by(50) {
        let ti = ti.as_f64().unwrap();
        let u = c["u"][i].as_f64().unwrap();
        assert!((u - (-ti).exp()).abs() < 1e-9);
        assert!((c["x"][i].as_f64().unwrap() - 2.0 * u).abs() < 1e-9);
    }
    assert_eq!(c["planned"], serde_json::json!([0.1, 1.0]));
    assert!(curves_json("burgers", 1.0, 1.0).is_err());
}

#[test]
fn heatmap_has_requested_shape() {
    let s = parse(sweep_json("quadratic-decay", 2.0, -1.0, 25).unwrap());
    assert_eq!(s["grid"]["det_g"].as_array().unwrap().len(), 625);
    assert_eq!(s["summary"]["planned_times"], serde_json::json!([0.1, 0.5]));
    assert!(s["grid"]["y1sq"][0].is_null());
}

#[test]
fn twin_recovers_scalar_truth_without_noise() {
    let t = parse(twin_json("linear-decay", 0.1, 1.0, 0.0, 0).unwrap());
    assert!(t["error"].as_f64().unwrap() < 1e-8);
    assert_eq!(t["truth"], serde_json::json!([2.0, -1.0]));
    let b = parse(twin_json("burgers", 0.01, 0.05, 0.05, 1).unwrap());
    assert_eq!(b["estimate"].as_array().unwrap().len(), 128);
    assert!(b["error"].as_f64().unwrap() < b["background_error"].as_f64().unwrap());
    assert!(twin_json("linear-decay", 0.5, 0.5, 0.1, 0)
        .unwrap_err()
        .contains("singular"));
    assert!(twin_json("advdiff", 0.01, 0.05, 0.1, 0).is_err());
}
