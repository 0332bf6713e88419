//! Browser bindings: three planner queries over the bundled profiles, each
//! returning a JSON string for the page in `www/` to plot.

use serde::Serialize;
use tierplan::cascade;
use tierplan::fixtures::{named_cascade, paper_profiles};
use tierplan::split;
use tierplan::tenancy;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct CascadeCurve {
    thresholds: Vec<f64>,
    expected_latency_ms: Vec<f64>,
    nonsplit_latency_ms: f64,
    savings_fraction: Vec<f64>,
    crossover_threshold: Option<f64>,
}

/// Threshold sweep for a bundled cascade with the link latency replaced.
pub fn cascade_curve_json(spec: &str, link_latency_ms: f64, steps: u32) -> Result<String, String> {
    let spec = named_cascade(spec).ok_or_else(|| format!("unknown cascade `{spec}`"))?;
    let c = spec
        .resolve(&paper_profiles())
        .map_err(|e| e.to_string())?
        .with_link_latency(link_latency_ms);
    let steps = steps.max(1);
    let grid: Vec<f64> = (0..=steps)
        .map(|i| f64::from(i) / f64::from(steps))
        .collect();
    let rows = cascade::threshold_sweep(&c, &grid).map_err(|e| e.to_string())?;
    let curve = CascadeCurve {
        thresholds: grid,
        expected_latency_ms: rows.iter().map(|r| r.expected_latency_ms).collect(),
        nonsplit_latency_ms: c.timings().nonsplit_ms(),
        savings_fraction: rows.iter().map(|r| r.savings_fraction).collect(),
        crossover_threshold: cascade::crossover_threshold(&c),
    };
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SplitProfile {
    layers: Vec<String>,
    output_bytes: Vec<u64>,
    baseline_bytes: u64,
    best_cut: Option<usize>,
}

/// Per-layer intermediate output sizes next to the cheapest encoded input.
pub fn split_profile_json(model: &str) -> Result<String, String> {
    let p = paper_profiles();
    let m = p.model(model).map_err(|e| e.to_string())?;
    let decision = split::best_cut(
        m,
        split::Objective::Bandwidth,
        p.device("tpu").map_err(|e| e.to_string())?,
        p.device("gpu").map_err(|e| e.to_string())?,
        p.link("edge-cloud").map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let out = SplitProfile {
        layers: m.layers.iter().map(|l| l.name.clone()).collect(),
        output_bytes: m.layers.iter().map(|l| l.output_bytes).collect(),
        baseline_bytes: m.baseline_bytes(),
        best_cut: decision.cut_index,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Aggregate throughput against tenant count, up to the device limit.
pub fn tenancy_curve_json(device: &str, model: &str, max_n: u32) -> Result<String, String> {
    let p = paper_profiles();
    let d = p.device(device).map_err(|e| e.to_string())?;
    let m = p.model(model).map_err(|e| e.to_string())?;
    let curve = tenancy::tenancy_curve(d, m, max_n).map_err(|e| e.to_string())?;
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn cascade_curve(spec: &str, link_latency_ms: f64, steps: u32) -> Result<String, JsValue> {
    cascade_curve_json(spec, link_latency_ms, steps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn split_profile(model: &str) -> Result<String, JsValue> {
    split_profile_json(model).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn tenancy_curve(device: &str, model: &str, max_n: u32) -> Result<String, JsValue> {
    tenancy_curve_json(device, model, max_n).map_err(|e| JsValue::from_str(&e))
}
