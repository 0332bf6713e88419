//! Model-compression cascades.
//!
//! A compact model answers locally; inputs whose confidence falls strictly
//! below the threshold are shipped over a link to a larger model. Everything
//! here is closed form over the escalation fraction `p = Pr[c < T]`.

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceDistribution;
use crate::profiles::{NetworkLink, ProfileSet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub model: String,
    pub device: String,
    /// Measured per-request latency; defaults to `1000 / throughput`.
    #[serde(default)]
    pub latency_ms: Option<f64>,
    /// Defaults to the model profile's accuracy.
    #[serde(default)]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LinkRef {
    Named(String),
    Inline(NetworkLink),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistributionRef {
    Named(String),
    Inline(ConfidenceDistribution),
}

/// Cascade description as written in spec files; resolve it against a
/// [`ProfileSet`] to analyze it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSpec {
    #[serde(default)]
    pub description: String,
    pub small: Placement,
    pub large: Placement,
    pub link: LinkRef,
    pub threshold: f64,
    pub confidence: DistributionRef,
    /// Bytes shipped on escalation; defaults to the small model's cheapest
    /// encoded input.
    #[serde(default)]
    pub payload_bytes: Option<u64>,
}

impl CascadeSpec {
    pub fn resolve(&self, profiles: &ProfileSet) -> Result<Cascade> {
        let small_model = profiles.model(&self.small.model)?;
        let large_model = profiles.model(&self.large.model)?;
        let small_ms = placement_ms(profiles, &self.small)?;
        let large_ms = placement_ms(profiles, &self.large)?;
        let link = match &self.link {
            LinkRef::Named(id) => profiles.link(id)?.clone(),
            LinkRef::Inline(link) => link.clone(),
        };
        if !(link.bandwidth_mbps > 0.0 && link.latency_ms >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "link `{}` needs bandwidth > 0 and latency >= 0",
                link.id
            )));
        }
        let confidence = match &self.confidence {
            DistributionRef::Named(id) => profiles.distribution(id)?.clone(),
            DistributionRef::Inline(d) => d.clone(),
        };
        if let Some((field, invariant)) = confidence.violations().into_iter().next() {
            return Err(Error::InvalidArgument(format!(
                "confidence distribution {field}: {invariant}"
            )));
        }
        let cascade = Cascade {
            small_ms,
            large_ms,
            link,
            payload_bytes: self
                .payload_bytes
                .unwrap_or_else(|| small_model.baseline_bytes()),
            threshold: self.threshold,
            confidence,
            small_accuracy: self.small.accuracy.unwrap_or(small_model.accuracy),
            large_accuracy: self.large.accuracy.unwrap_or(large_model.accuracy),
        };
        check_threshold(cascade.threshold)?;
        Ok(cascade)
    }
}

fn placement_ms(profiles: &ProfileSet, placement: &Placement) -> Result<f64> {
    let device = profiles.device(&placement.device)?;
    match placement.latency_ms {
        Some(ms) if ms > 0.0 && ms.is_finite() => Ok(ms),
        Some(ms) => Err(Error::InvalidArgument(format!(
            "latency override {ms} for `{}` must be a finite value > 0",
            placement.device
        ))),
        None => device.inference_ms(&placement.model),
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::ThresholdOutOfRange(t))
    }
}

/// Per-request latencies of the three cascade stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeTimings {
    pub small_ms: f64,
    /// Link latency plus payload serialization.
    pub net_ms: f64,
    pub large_ms: f64,
}

impl CascadeTimings {
    /// `L_small + p (net + L_large)`.
    pub fn expected_ms(&self, p: f64) -> f64 {
        self.small_ms + p * (self.net_ms + self.large_ms)
    }

    /// Every request pays the hop and the large inference.
    pub fn nonsplit_ms(&self) -> f64 {
        self.net_ms + self.large_ms
    }

    /// Escalation fraction at which cascade and non-split break even:
    /// `1 - L_small / (net + L_large)`.
    pub fn breakeven_fraction(&self) -> f64 {
        1.0 - self.small_ms / self.nonsplit_ms()
    }
}

/// A cascade with every reference resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub small_ms: f64,
    pub large_ms: f64,
    pub link: NetworkLink,
    pub payload_bytes: u64,
    pub threshold: f64,
    pub confidence: ConfidenceDistribution,
    pub small_accuracy: f64,
    pub large_accuracy: f64,
}

impl Cascade {
    pub fn timings(&self) -> CascadeTimings {
        CascadeTimings {
            small_ms: self.small_ms,
            net_ms: self.link.transfer_ms(self.payload_bytes),
            large_ms: self.large_ms,
        }
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self {
            threshold,
            ..self.clone()
        }
    }

    pub fn with_link_latency(&self, latency_ms: f64) -> Self {
        let mut out = self.clone();
        out.link.latency_ms = latency_ms;
        out
    }
}

/// `Pr[confidence < threshold]`.
pub fn escalation_fraction(dist: &ConfidenceDistribution, threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    Ok(dist.prob_below(threshold).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    pub expected_ms: f64,
    pub nonsplit_ms: f64,
}

pub fn expected_latency(cascade: &Cascade) -> Result<LatencyEstimate> {
    let p = escalation_fraction(&cascade.confidence, cascade.threshold)?;
    let t = cascade.timings();
    Ok(LatencyEstimate {
        expected_ms: t.expected_ms(p),
        nonsplit_ms: t.nonsplit_ms(),
    })
}

/// Largest threshold at which the cascade is no slower than non-split.
///
/// `None` when the small model alone is already slower than the hop plus
/// the large model; `Some(1.0)` when the cascade wins at every threshold.
pub fn crossover_threshold(cascade: &Cascade) -> Option<f64> {
    let t = cascade.timings();
    if t.small_ms >= t.nonsplit_ms() {
        return None;
    }
    let p_star = t.breakeven_fraction();
    if p_star >= 1.0 {
        return Some(1.0);
    }
    Some(cascade.confidence.largest_threshold_at_most(p_star))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthEstimate {
    pub expected_bytes: f64,
    /// Relative to non-split, which always ships the payload.
    pub savings_fraction: f64,
}

pub fn expected_bandwidth(cascade: &Cascade) -> Result<BandwidthEstimate> {
    let p = escalation_fraction(&cascade.confidence, cascade.threshold)?;
    Ok(BandwidthEstimate {
        expected_bytes: p * cascade.payload_bytes as f64,
        savings_fraction: 1.0 - p,
    })
}

/// `(1 - p) acc_small_accepted + p acc_large`.
///
/// Accuracy conditioned on acceptance is rarely known; callers without it
/// pass the small model's overall accuracy, which is conservative.
pub fn expected_accuracy(
    cascade: &Cascade,
    acc_small_accepted: f64,
    acc_large: f64,
) -> Result<f64> {
    for acc in [acc_small_accepted, acc_large] {
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::InvalidArgument(format!(
                "accuracy {acc} outside [0, 1]"
            )));
        }
    }
    let p = escalation_fraction(&cascade.confidence, cascade.threshold)?;
    Ok((1.0 - p) * acc_small_accepted + p * acc_large)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cloud_latency_ms: f64,
    pub expected_latency_ms: f64,
    pub nonsplit_latency_ms: f64,
    /// `1 - expected / nonsplit`; negative when the cascade is slower.
    pub reduction: f64,
}

/// Re-evaluates the cascade with the link latency replaced by each grid value.
pub fn latency_sweep(cascade: &Cascade, cloud_latency_grid_ms: &[f64]) -> Result<Vec<SweepRow>> {
    cloud_latency_grid_ms
        .iter()
        .map(|&ms| {
            if !(ms >= 0.0 && ms.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "cloud latency {ms} must be >= 0"
                )));
            }
            let est = expected_latency(&cascade.with_link_latency(ms))?;
            Ok(SweepRow {
                cloud_latency_ms: ms,
                expected_latency_ms: est.expected_ms,
                nonsplit_latency_ms: est.nonsplit_ms,
                reduction: 1.0 - est.expected_ms / est.nonsplit_ms,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub escalation_fraction: f64,
    pub expected_bytes: f64,
    pub savings_fraction: f64,
    pub expected_latency_ms: f64,
    pub nonsplit_latency_ms: f64,
}

pub fn threshold_sweep(cascade: &Cascade, thresholds: &[f64]) -> Result<Vec<ThresholdRow>> {
    thresholds
        .iter()
        .map(|&t| {
            let c = cascade.with_threshold(t);
            let bw = expected_bandwidth(&c)?;
            let lat = expected_latency(&c)?;
            Ok(ThresholdRow {
                threshold: t,
                escalation_fraction: 1.0 - bw.savings_fraction,
                expected_bytes: bw.expected_bytes,
                savings_fraction: bw.savings_fraction,
                expected_latency_ms: lat.expected_ms,
                nonsplit_latency_ms: lat.nonsplit_ms,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeAnalysis {
    pub threshold: f64,
    pub escalation_fraction: f64,
    pub expected_bytes: f64,
    pub savings_fraction: f64,
    pub expected_latency_ms: f64,
    pub nonsplit_latency_ms: f64,
    pub expected_accuracy: f64,
    pub crossover_threshold: Option<f64>,
}

pub fn analyze(cascade: &Cascade) -> Result<CascadeAnalysis> {
    let p = escalation_fraction(&cascade.confidence, cascade.threshold)?;
    let bw = expected_bandwidth(cascade)?;
    let lat = expected_latency(cascade)?;
    Ok(CascadeAnalysis {
        threshold: cascade.threshold,
        escalation_fraction: p,
        expected_bytes: bw.expected_bytes,
        savings_fraction: bw.savings_fraction,
        expected_latency_ms: lat.expected_ms,
        nonsplit_latency_ms: lat.nonsplit_ms,
        expected_accuracy: expected_accuracy(
            cascade,
            cascade.small_accuracy,
            cascade.large_accuracy,
        )?,
        crossover_threshold: crossover_threshold(cascade),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::Tier;

    fn explicit(
        small_ms: f64,
        net_ms: f64,
        large_ms: f64,
        dist: ConfidenceDistribution,
    ) -> Cascade {
        let mut link = NetworkLink::ideal("l", Tier::Edge, Tier::Cloud);
        link.latency_ms = net_ms;
        Cascade {
            small_ms,
            large_ms,
            link,
            payload_bytes: 10_000,
            threshold: 0.5,
            confidence: dist,
            small_accuracy: 0.7,
            large_accuracy: 0.75,
        }
    }

    #[test]
    fn escalation_rejects_bad_threshold() {
        let d = ConfidenceDistribution::uniform(0.0, 1.0);
        assert!(matches!(
            escalation_fraction(&d, 1.2),
            Err(Error::ThresholdOutOfRange(_))
        ));
        assert!(escalation_fraction(&d, -0.1).is_err());
    }

    #[test]
    fn latency_at_extremes() {
        let never = explicit(14.11, 47.76, 1.45, ConfidenceDistribution::point_mass(1.0));
        assert_eq!(expected_latency(&never).unwrap().expected_ms, 14.11);
        let mut always = explicit(14.11, 47.76, 1.45, ConfidenceDistribution::point_mass(0.0));
        always.threshold = 0.5;
        let est = expected_latency(&always).unwrap();
        assert!((est.expected_ms - (14.11 + 47.76 + 1.45)).abs() < 1e-12);
        assert!(est.expected_ms > est.nonsplit_ms);
    }

    #[test]
    fn half_escalation_example() {
        let c = explicit(
            14.11,
            47.76,
            1.45,
            ConfidenceDistribution::uniform(0.0, 1.0),
        );
        let est = expected_latency(&c).unwrap();
        // 14.11 + 0.5 * 49.21
        assert!((est.expected_ms - 38.715).abs() < 1e-9);
        assert!((est.nonsplit_ms - 49.21).abs() < 1e-9);
    }

    #[test]
    fn crossover_closed_form_uniform() {
        let c = explicit(
            14.11,
            47.76,
            1.45,
            ConfidenceDistribution::uniform(0.0, 1.0),
        );
        let t = crossover_threshold(&c).unwrap();
        assert!((t - (1.0 - 14.11 / 49.21)).abs() < 1e-12);
        assert!((t - 0.7133).abs() < 1e-4);
    }

    #[test]
    fn crossover_absent_when_small_too_slow() {
        let c = explicit(60.0, 47.76, 1.45, ConfidenceDistribution::uniform(0.0, 1.0));
        assert_eq!(crossover_threshold(&c), None);
    }

    #[test]
    fn crossover_point_mass() {
        let c = explicit(14.11, 47.76, 1.45, ConfidenceDistribution::point_mass(0.95));
        assert_eq!(crossover_threshold(&c), Some(0.95));
    }

    #[test]
    fn bandwidth_at_threshold_one() {
        let mut c = explicit(1.0, 1.0, 1.0, ConfidenceDistribution::uniform(0.0, 1.0));
        c.threshold = 1.0;
        let bw = expected_bandwidth(&c).unwrap();
        assert_eq!(bw.savings_fraction, 0.0);
        assert_eq!(bw.expected_bytes, 10_000.0);
    }

    #[test]
    fn accuracy_blend() {
        let c =
            explicit(1.0, 1.0, 1.0, ConfidenceDistribution::uniform(0.0, 1.0)).with_threshold(0.4);
        assert!((expected_accuracy(&c, 0.7, 0.75).unwrap() - 0.72).abs() < 1e-12);
        let c0 = c.with_threshold(0.0);
        assert_eq!(expected_accuracy(&c0, 0.7, 0.75).unwrap(), 0.7);
        let c1 = c.with_threshold(1.0);
        assert_eq!(expected_accuracy(&c1, 0.7, 0.75).unwrap(), 0.75);
        assert!(expected_accuracy(&c, 1.5, 0.75).is_err());
    }

    #[test]
    fn sweep_sign_at_zero_latency() {
        let c = explicit(5.0, 0.0, 1.0, ConfidenceDistribution::uniform(0.0, 1.0));
        let rows = latency_sweep(&c, &[0.0]).unwrap();
        assert!(rows[0].reduction < 0.0);
        assert!(latency_sweep(&c, &[-1.0]).is_err());
    }
}
