//! Device, model, link and workload profiles.
//!
//! Profiles are plain JSON with four top-level keys: `devices`, `models`,
//! `links` and `distributions`. Byte sizes are integers in bytes, memory in
//! MB (2^20 bytes), power in watts, latency in milliseconds and bandwidth in
//! Mbit/s.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::confidence::ConfidenceDistribution;
use crate::{Error, Result};

pub const BYTES_PER_MB: f64 = 1_048_576.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Device,
    Edge,
    Cloud,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Device => "device",
            Tier::Edge => "edge",
            Tier::Cloud => "cloud",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchPoint {
    pub batch_size: u32,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub tier: Tier,
    /// Mean power while serving inferences.
    pub power_watts: f64,
    /// Accelerator memory available to models after OS/runtime reserve.
    pub usable_accel_memory_mb: f64,
    #[serde(default)]
    pub host_ram_mb: f64,
    pub unit_cost_usd: f64,
    #[serde(default)]
    pub supports_host_swap: bool,
    #[serde(default)]
    pub supports_quantization: bool,
    #[serde(default = "default_quantization_factor")]
    pub quantization_factor: f64,
    #[serde(default)]
    pub batching_effective: bool,
    #[serde(default)]
    pub framework_overhead_mb: f64,
    /// Fractional aggregate throughput lost per host-swapped tenant.
    #[serde(default)]
    pub swap_penalty_per_tenant: f64,
    #[serde(default)]
    pub isolation: bool,
    pub per_model_throughput: BTreeMap<String, f64>,
    #[serde(default)]
    pub batch_speedup_points: BTreeMap<String, Vec<BatchPoint>>,
}

fn default_quantization_factor() -> f64 {
    0.25
}

impl DeviceProfile {
    /// Sequential inferences per second for `model`.
    pub fn throughput(&self, model: &str) -> Result<f64> {
        self.per_model_throughput
            .get(model)
            .copied()
            .ok_or_else(|| Error::MissingThroughput {
                device: self.id.clone(),
                model: model.to_string(),
            })
    }

    /// Whole-model latency of one sequential inference, in ms.
    pub fn inference_ms(&self, model: &str) -> Result<f64> {
        Ok(1000.0 / self.throughput(model)?)
    }

    pub fn usable_accel_bytes(&self) -> u64 {
        (self.usable_accel_memory_mb * BYTES_PER_MB).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub index: usize,
    pub name: String,
    /// Size of the intermediate output if the model is cut after this layer.
    pub output_bytes: u64,
    /// Share of whole-model float operations done through this layer.
    pub cumulative_flops_fraction: f64,
    pub resident_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub input_bytes_raw: u64,
    pub input_bytes_png: u64,
    pub input_bytes_jpeg: u64,
    pub model_size_mb: f64,
    pub params_millions: f64,
    pub flops_millions: f64,
    pub accuracy: f64,
    pub layers: Vec<LayerRecord>,
}

impl ModelProfile {
    /// Bytes sent per request by a non-split deployment: the smaller of the
    /// PNG and JPEG encodings. Raw RGB is never the cheapest option.
    pub fn baseline_bytes(&self) -> u64 {
        self.input_bytes_png.min(self.input_bytes_jpeg)
    }

    pub fn resident_bytes(&self) -> u64 {
        self.layers.iter().map(|l| l.resident_bytes).sum()
    }

    pub fn layer(&self, index: usize) -> Result<&LayerRecord> {
        self.layers.get(index).ok_or(Error::CutOutOfRange {
            index,
            layers: self.layers.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLink {
    pub id: String,
    pub from_tier: Tier,
    pub to_tier: Tier,
    pub bandwidth_mbps: f64,
    pub latency_ms: f64,
}

impl NetworkLink {
    /// Zero latency, unbounded bandwidth.
    pub fn ideal(id: impl Into<String>, from_tier: Tier, to_tier: Tier) -> Self {
        Self {
            id: id.into(),
            from_tier,
            to_tier,
            bandwidth_mbps: f64::INFINITY,
            latency_ms: 0.0,
        }
    }

    /// Time to push `bytes` onto the wire, excluding propagation latency.
    pub fn serialization_ms(&self, bytes: u64) -> f64 {
        bytes as f64 * 8.0 / (self.bandwidth_mbps * 1000.0)
    }

    pub fn transfer_ms(&self, bytes: u64) -> f64 {
        self.latency_ms + self.serialization_ms(bytes)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub devices: Vec<DeviceProfile>,
    pub models: Vec<ModelProfile>,
    #[serde(default)]
    pub links: Vec<NetworkLink>,
    #[serde(default)]
    pub distributions: BTreeMap<String, ConfidenceDistribution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Unknown keys are an error.
    #[default]
    Strict,
    Lenient,
}

impl ProfileSet {
    /// Parses without validating invariants.
    pub fn from_json_str(text: &str, mode: ParseMode) -> Result<Self> {
        parse_json(text, mode)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile sets always serialize")
    }

    pub fn device(&self, id: &str) -> Result<&DeviceProfile> {
        self.devices
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| Error::UnknownDevice(id.to_string()))
    }

    pub fn model(&self, id: &str) -> Result<&ModelProfile> {
        self.models
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn link(&self, id: &str) -> Result<&NetworkLink> {
        self.links
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| Error::UnknownLink(id.to_string()))
    }

    pub fn distribution(&self, id: &str) -> Result<&ConfidenceDistribution> {
        self.distributions
            .get(id)
            .ok_or_else(|| Error::UnknownDistribution(id.to_string()))
    }

    /// Validates and returns the set, or the violations as an error.
    pub fn validated(self) -> Result<Self> {
        let violations = validate(&self);
        if let Some(v) = violations
            .iter()
            .find(|v| v.kind == ViolationKind::DanglingReference)
        {
            return Err(Error::DanglingReference {
                profile: v.profile.clone(),
                model: v.reference.clone().unwrap_or_default(),
            });
        }
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::Invalid(violations))
        }
    }
}

/// Reads, parses and validates a profile file.
pub fn load_profiles(path: impl AsRef<Path>, mode: ParseMode) -> Result<ProfileSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ProfileSet::from_json_str(&text, mode)?.validated()
}

/// Deserializes `text`, rejecting keys the schema does not know in strict mode.
///
/// Unknown keys are found by re-serializing the parsed value and diffing the
/// key sets; every schema field is always serialized, so anything present in
/// the input but absent from the canonical form was ignored by serde.
pub fn parse_json<T: DeserializeOwned + Serialize>(text: &str, mode: ParseMode) -> Result<T> {
    let parsed: T = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if mode == ParseMode::Strict {
        let raw: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let canonical = serde_json::to_value(&parsed).map_err(|e| Error::Parse(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&raw, &canonical, "$", &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::UnknownKeys(unknown));
        }
    }
    Ok(parsed)
}

fn unknown_keys(raw: &Value, canonical: &Value, path: &str, out: &mut Vec<String>) {
    match (raw, canonical) {
        (Value::Object(r), Value::Object(c)) => {
            for (key, value) in r {
                let child = format!("{path}.{key}");
                match c.get(key) {
                    Some(cv) => unknown_keys(value, cv, &child, out),
                    None => out.push(child),
                }
            }
        }
        (Value::Array(r), Value::Array(c)) => {
            for (i, (rv, cv)) in r.iter().zip(c).enumerate() {
                unknown_keys(rv, cv, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Invariant,
    DanglingReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// e.g. `device:tpu`, `model:mobilenet_v2`, `profiles`.
    pub profile: String,
    pub field: String,
    pub invariant: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.profile, self.field, self.invariant)
    }
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn check(&mut self, ok: bool, profile: &str, field: &str, invariant: &str) {
        if !ok {
            self.push(profile, field, invariant);
        }
    }

    fn push(&mut self, profile: &str, field: &str, invariant: &str) {
        self.out.push(Violation {
            kind: ViolationKind::Invariant,
            profile: profile.to_string(),
            field: field.to_string(),
            invariant: invariant.to_string(),
            reference: None,
        });
    }

    fn dangling(&mut self, profile: &str, field: &str, model: &str) {
        self.out.push(Violation {
            kind: ViolationKind::DanglingReference,
            profile: profile.to_string(),
            field: field.to_string(),
            invariant: format!("model `{model}` is not defined"),
            reference: Some(model.to_string()),
        });
    }
}

fn positive(x: f64) -> bool {
    x > 0.0
}

fn nonnegative(x: f64) -> bool {
    x >= 0.0
}

/// Lists every broken invariant; an empty list means the set is valid.
pub fn validate(set: &ProfileSet) -> Vec<Violation> {
    let mut c = Checker { out: Vec::new() };
    c.check(!set.devices.is_empty(), "profiles", "devices", "no devices");
    c.check(!set.models.is_empty(), "profiles", "models", "no models");

    check_unique(&mut c, "device", set.devices.iter().map(|d| d.id.as_str()));
    check_unique(&mut c, "model", set.models.iter().map(|m| m.id.as_str()));
    check_unique(&mut c, "link", set.links.iter().map(|l| l.id.as_str()));

    let model_ids: BTreeSet<&str> = set.models.iter().map(|m| m.id.as_str()).collect();
    for d in &set.devices {
        validate_device(&mut c, d, &model_ids);
    }
    for m in &set.models {
        validate_model(&mut c, m);
    }
    for l in &set.links {
        let p = format!("link:{}", l.id);
        c.check(
            positive(l.bandwidth_mbps),
            &p,
            "bandwidth_mbps",
            "bandwidth must be > 0",
        );
        c.check(
            nonnegative(l.latency_ms) && l.latency_ms.is_finite(),
            &p,
            "latency_ms",
            "latency must be a finite value >= 0",
        );
    }
    for (id, dist) in &set.distributions {
        let p = format!("distribution:{id}");
        for (field, invariant) in dist.violations() {
            c.push(&p, &field, &invariant);
        }
    }
    c.out
}

fn check_unique<'a>(c: &mut Checker, what: &str, ids: impl Iterator<Item = &'a str>) {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            c.push(&format!("{what}:{id}"), "id", "ids must be unique");
        }
    }
}

fn validate_device(c: &mut Checker, d: &DeviceProfile, model_ids: &BTreeSet<&str>) {
    let p = format!("device:{}", d.id);
    c.check(!d.id.is_empty(), &p, "id", "id must be nonempty");
    c.check(
        positive(d.power_watts),
        &p,
        "power_watts",
        "power must be > 0",
    );
    c.check(
        positive(d.usable_accel_memory_mb),
        &p,
        "usable_accel_memory_mb",
        "usable accelerator memory must be > 0",
    );
    c.check(
        nonnegative(d.host_ram_mb),
        &p,
        "host_ram_mb",
        "host RAM must be >= 0",
    );
    c.check(
        positive(d.unit_cost_usd),
        &p,
        "unit_cost_usd",
        "unit cost must be > 0",
    );
    c.check(
        nonnegative(d.framework_overhead_mb),
        &p,
        "framework_overhead_mb",
        "framework overhead must be >= 0",
    );
    c.check(
        d.quantization_factor > 0.0 && d.quantization_factor <= 1.0,
        &p,
        "quantization_factor",
        "quantization factor must lie in (0, 1]",
    );
    c.check(
        nonnegative(d.swap_penalty_per_tenant),
        &p,
        "swap_penalty_per_tenant",
        "swap penalty must be >= 0",
    );
    for (model, &ips) in &d.per_model_throughput {
        let field = format!("per_model_throughput.{model}");
        if !model_ids.contains(model.as_str()) {
            c.dangling(&p, &field, model);
        }
        c.check(
            positive(ips) && ips.is_finite(),
            &p,
            &field,
            "throughput must be a finite value > 0",
        );
    }
    for (model, points) in &d.batch_speedup_points {
        let field = format!("batch_speedup_points.{model}");
        if !model_ids.contains(model.as_str()) {
            c.dangling(&p, &field, model);
        }
        c.check(
            points.first()
                == Some(&BatchPoint {
                    batch_size: 1,
                    speedup: 1.0,
                }),
            &p,
            &field,
            "calibration must start with the identity point (1, 1.0)",
        );
        c.check(
            points.windows(2).all(|w| w[0].batch_size < w[1].batch_size),
            &p,
            &field,
            "batch sizes must be strictly increasing",
        );
        c.check(
            points
                .iter()
                .all(|pt| pt.batch_size >= 1 && nonnegative(pt.speedup)),
            &p,
            &field,
            "batch sizes must be >= 1 and speedups >= 0",
        );
    }
}

fn validate_model(c: &mut Checker, m: &ModelProfile) {
    let p = format!("model:{}", m.id);
    c.check(!m.id.is_empty(), &p, "id", "id must be nonempty");
    c.check(
        m.input_bytes_raw > 0 && m.input_bytes_png > 0 && m.input_bytes_jpeg > 0,
        &p,
        "input_bytes_*",
        "encoded input sizes must be > 0",
    );
    c.check(
        m.input_bytes_jpeg <= m.input_bytes_png && m.input_bytes_png <= m.input_bytes_raw,
        &p,
        "input_bytes_*",
        "encoding ordering jpeg <= png <= raw violated",
    );
    c.check(
        positive(m.model_size_mb),
        &p,
        "model_size_mb",
        "model size must be > 0",
    );
    c.check(
        positive(m.params_millions),
        &p,
        "params_millions",
        "parameter count must be > 0",
    );
    c.check(
        positive(m.flops_millions),
        &p,
        "flops_millions",
        "FLOPs must be > 0",
    );
    c.check(
        (0.0..=1.0).contains(&m.accuracy),
        &p,
        "accuracy",
        "accuracy must lie in [0, 1]",
    );

    if m.layers.is_empty() {
        c.push(&p, "layers", "layers must be nonempty");
        return;
    }
    for (i, layer) in m.layers.iter().enumerate() {
        c.check(
            layer.index == i,
            &p,
            &format!("layers[{i}].index"),
            "layer indices must be 0-based and in order",
        );
        c.check(
            (0.0..=1.0).contains(&layer.cumulative_flops_fraction),
            &p,
            &format!("layers[{i}].cumulative_flops_fraction"),
            "cumulative FLOPs fraction must lie in [0, 1]",
        );
    }
    c.check(
        m.layers
            .windows(2)
            .all(|w| w[0].cumulative_flops_fraction <= w[1].cumulative_flops_fraction),
        &p,
        "layers.cumulative_flops_fraction",
        "cumulative FLOPs fraction must be nondecreasing",
    );
    c.check(
        m.layers.last().map(|l| l.cumulative_flops_fraction) == Some(1.0),
        &p,
        "layers.cumulative_flops_fraction",
        "final layer must complete the model (fraction = 1)",
    );
    let expected = (m.model_size_mb * BYTES_PER_MB).round();
    c.check(
        (m.resident_bytes() as f64 - expected).abs() <= 1.0,
        &p,
        "layers.resident_bytes",
        "resident bytes must sum to the model size",
    );
}
