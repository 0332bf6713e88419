use std::path::PathBuf;

use crate::profiles::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON syntax or schema mismatch; the message carries line and column.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown key(s) in strict mode: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("{} violation(s); first: {}", .0.len(), .0.first().map(ToString::to_string).unwrap_or_default())]
    Invalid(Vec<Violation>),

    #[error("{profile} references unknown model `{model}`")]
    DanglingReference { profile: String, model: String },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown device `{0}`")]
    UnknownDevice(String),

    #[error("unknown link `{0}`")]
    UnknownLink(String),

    #[error("unknown confidence distribution `{0}`")]
    UnknownDistribution(String),

    #[error("device `{device}` has no throughput entry for model `{model}`")]
    MissingThroughput { device: String, model: String },

    #[error("device `{device}` has no batch calibration for model `{model}`")]
    EmptyCalibration { device: String, model: String },

    #[error("batch size must be at least 1")]
    InvalidBatchSize,

    #[error("model `{0}` has no layers")]
    EmptyModel(String),

    #[error("cut index {index} out of range for a {layers}-layer model")]
    CutOutOfRange { index: usize, layers: usize },

    #[error("no node can hold layer {index} (`{name}`, {bytes} bytes)")]
    InfeasiblePartition {
        index: usize,
        name: String,
        bytes: u64,
    },

    #[error("at least one node is required")]
    NoNodes,

    #[error("threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("loaded footprint of `{model}` on `{device}` is zero")]
    ZeroFootprint { device: String, model: String },

    #[error("{requested} tenants requested but `{device}` holds at most {max}")]
    TooManyTenants {
        device: String,
        requested: u32,
        max: u32,
    },

    #[error("malformed trace: {0}")]
    Trace(String),
}
