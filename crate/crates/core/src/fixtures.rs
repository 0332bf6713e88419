//! Bundled calibration data.
//!
//! `paper_profiles` holds the seven measured devices (Raspberry Pi 3, NCS2
//! VPU, Edge TPU, Jetson Nano, Jetson TX2, Xeon server CPU, V100 cloud GPU)
//! and five models. Per-layer byte sizes are constructed, not measured: they
//! keep the orderings that matter for split decisions, with MobileNet V2 cut
//! 16 the cheapest and every Inception V4 cut above both encoded input sizes.
//! Frames are assumed to be CAVIAR-like video stills resized to each model's
//! input shape.

use crate::cascade::CascadeSpec;
use crate::profiles::{ParseMode, ProfileSet, parse_json};

pub const PAPER_PROFILES_JSON: &str = include_str!("../fixtures/paper_profiles.json");
pub const CASCADE_EDGE_CLOUD_JSON: &str = include_str!("../fixtures/cascade_edge_cloud.json");
pub const CASCADE_DEVICE_EDGE_JSON: &str = include_str!("../fixtures/cascade_device_edge.json");
pub const CASCADE_SKEWED_EDGE_CLOUD_JSON: &str =
    include_str!("../fixtures/cascade_skewed_edge_cloud.json");

pub fn paper_profiles() -> ProfileSet {
    ProfileSet::from_json_str(PAPER_PROFILES_JSON, ParseMode::Strict)
        .expect("bundled profiles parse")
}

/// Looks up a bundled profile set by name.
pub fn named_profiles(name: &str) -> Option<ProfileSet> {
    match name {
        "paper_profiles" => Some(paper_profiles()),
        _ => None,
    }
}

/// Looks up a bundled cascade spec: `edge_cloud`, `device_edge` or
/// `skewed_edge_cloud`.
pub fn named_cascade(name: &str) -> Option<CascadeSpec> {
    let text = match name {
        "edge_cloud" => CASCADE_EDGE_CLOUD_JSON,
        "device_edge" => CASCADE_DEVICE_EDGE_JSON,
        "skewed_edge_cloud" => CASCADE_SKEWED_EDGE_CLOUD_JSON,
        _ => return None,
    };
    Some(parse_json(text, ParseMode::Strict).expect("bundled cascade spec parses"))
}

/// Measured per-node latencies of MobileNet V2 split after layer 16, next
/// to the latency of running it unsplit on node 2. Network time excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredSplit {
    pub scenario: &'static str,
    pub node1: &'static str,
    pub node2: &'static str,
    pub node1_ms: f64,
    pub node2_ms: f64,
    pub nonsplit_ms: f64,
}

pub const MEASURED_SPLITS: [MeasuredSplit; 3] = [
    MeasuredSplit {
        scenario: "device-edge",
        node1: "vpu",
        node2: "tpu",
        node1_ms: 52.19,
        node2_ms: 4.03,
        nonsplit_ms: 14.11,
    },
    MeasuredSplit {
        scenario: "edge-edge",
        node1: "tpu",
        node2: "tpu",
        node1_ms: 13.50,
        node2_ms: 4.03,
        nonsplit_ms: 14.11,
    },
    MeasuredSplit {
        scenario: "edge-cloud",
        node1: "tpu",
        node2: "gpu",
        node1_ms: 13.05,
        node2_ms: 0.50,
        nonsplit_ms: 1.45,
    },
];
