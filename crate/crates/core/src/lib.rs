//! Planning and simulation for deep-learning inference placed across
//! device, edge and cloud tiers.
//!
//! Everything is driven by a [`ProfileSet`]: measured device throughput and
//! power, per-layer model records, network links and small-model confidence
//! distributions. On top of it sit the planners ([`metrics`], [`split`],
//! [`cascade`], [`tenancy`]) and a deterministic trace replayer ([`sim`]).

pub mod cascade;
pub mod confidence;
mod error;
pub mod fixtures;
pub mod metrics;
pub mod profiles;
pub mod sim;
pub mod split;
pub mod tenancy;

pub use confidence::ConfidenceDistribution;
pub use error::{Error, Result};
pub use profiles::{
    DeviceProfile, LayerRecord, ModelProfile, NetworkLink, ParseMode, ProfileSet, Tier, Violation,
    load_profiles, validate,
};
