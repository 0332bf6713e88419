use serde_json::Value;
use tierplan_web::{cascade_curve_json, split_profile_json, tenancy_curve_json};

#[test]
fn cascade_curve_shape() {
    let v: Value =
        serde_json::from_str(&cascade_curve_json("edge_cloud", 47.76, 20).unwrap()).unwrap();
    assert_eq!(v["thresholds"].as_array().unwrap().len(), 21);
    assert_eq!(v["expected_latency_ms"].as_array().unwrap().len(), 21);
    let savings = v["savings_fraction"][10].as_f64().unwrap();
    assert!((savings - 0.41).abs() < 1e-9);
    assert!(v["crossover_threshold"].is_f64());
    assert!(cascade_curve_json("nope", 1.0, 4).is_err());
}

#[test]
fn split_profile_marks_best_cut() {
    let v: Value = serde_json::from_str(&split_profile_json("mobilenet_v2").unwrap()).unwrap();
    assert_eq!(v["best_cut"], 16);
    assert_eq!(v["baseline_bytes"], 11274);
    let v: Value = serde_json::from_str(&split_profile_json("inception_v4").unwrap()).unwrap();
    assert!(v["best_cut"].is_null());
}

#[test]
fn tenancy_curve_stops_at_limit() {
    let v: Value =
        serde_json::from_str(&tenancy_curve_json("nano", "ssd_mobilenet_v2", 80).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(tenancy_curve_json("tpu", "resnet", 4).is_err());
}
