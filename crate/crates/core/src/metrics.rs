//! Raw and normalized device metrics, and the batching throughput model.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::profiles::{DeviceProfile, ProfileSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKey {
    Throughput,
    PerfPerWatt,
    PerfPerDollar,
}

impl FromStr for RankKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "throughput" => Ok(Self::Throughput),
            "perf_per_watt" => Ok(Self::PerfPerWatt),
            "perf_per_dollar" => Ok(Self::PerfPerDollar),
            other => Err(Error::InvalidArgument(format!(
                "unknown rank key `{other}`"
            ))),
        }
    }
}

impl fmt::Display for RankKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Throughput => "throughput",
            Self::PerfPerWatt => "perf_per_watt",
            Self::PerfPerDollar => "perf_per_dollar",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub device_id: String,
    pub model_id: String,
    pub throughput_ips: f64,
    /// Inferences per second per watt.
    pub perf_per_watt: f64,
    /// Inferences per second per dollar of unit cost.
    pub perf_per_dollar: f64,
    pub energy_per_inference_j: f64,
}

impl MetricRow {
    pub fn key(&self, key: RankKey) -> f64 {
        match key {
            RankKey::Throughput => self.throughput_ips,
            RankKey::PerfPerWatt => self.perf_per_watt,
            RankKey::PerfPerDollar => self.perf_per_dollar,
        }
    }
}

pub fn metric_row(device: &DeviceProfile, model_id: &str) -> Result<MetricRow> {
    let ips = device.throughput(model_id)?;
    Ok(MetricRow {
        device_id: device.id.clone(),
        model_id: model_id.to_string(),
        throughput_ips: ips,
        perf_per_watt: ips / device.power_watts,
        perf_per_dollar: ips / device.unit_cost_usd,
        energy_per_inference_j: device.power_watts / ips,
    })
}

/// Every device's metrics for `model_id`, best first. Ties break by device
/// id so the order is deterministic.
pub fn rank(profiles: &ProfileSet, model_id: &str, key: RankKey) -> Result<Vec<MetricRow>> {
    profiles.model(model_id)?;
    let mut rows = profiles
        .devices
        .iter()
        .map(|d| metric_row(d, model_id))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| match b.key(key).total_cmp(&a.key(key)) {
        Ordering::Equal => a.device_id.cmp(&b.device_id),
        other => other,
    });
    Ok(rows)
}

pub const CSV_HEADER: &str = "device,model,throughput_ips,perf_per_watt,perf_per_dollar,energy_j";

pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.device_id,
            r.model_id,
            r.throughput_ips,
            r.perf_per_watt,
            r.perf_per_dollar,
            r.energy_per_inference_j
        ));
    }
    out
}

/// Joules per inference: mean power over throughput.
pub fn energy_per_inference(device: &DeviceProfile, model_id: &str) -> Result<f64> {
    Ok(device.power_watts / device.throughput(model_id)?)
}

/// Throughput multiplier at `batch_size` relative to sequential inference.
///
/// Piecewise linear in log2(batch size) between calibration points, held at
/// the last point beyond the largest calibrated batch. Devices where
/// batching does not help always return 1.
pub fn batch_speedup(device: &DeviceProfile, model_id: &str, batch_size: u32) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::InvalidBatchSize);
    }
    device.throughput(model_id)?;
    if !device.batching_effective {
        return Ok(1.0);
    }
    let points = device
        .batch_speedup_points
        .get(model_id)
        .filter(|p| !p.is_empty())
        .ok_or_else(|| Error::EmptyCalibration {
            device: device.id.clone(),
            model: model_id.to_string(),
        })?;

    if let Some(p) = points.iter().find(|p| p.batch_size == batch_size) {
        return Ok(p.speedup);
    }
    let last = points[points.len() - 1];
    if batch_size > last.batch_size {
        return Ok(last.speedup);
    }
    let first = points[0];
    if batch_size < first.batch_size {
        return Ok(first.speedup);
    }
    let upper = points.partition_point(|p| p.batch_size < batch_size);
    let (lo, hi) = (points[upper - 1], points[upper]);
    let x = f64::from(batch_size).log2();
    let (x0, x1) = (
        f64::from(lo.batch_size).log2(),
        f64::from(hi.batch_size).log2(),
    );
    Ok(lo.speedup + (x - x0) / (x1 - x0) * (hi.speedup - lo.speedup))
}

/// Inferences per second when serving batches of `batch_size`.
pub fn batch_throughput(device: &DeviceProfile, model_id: &str, batch_size: u32) -> Result<f64> {
    let speedup = batch_speedup(device, model_id, batch_size)?;
    Ok(device.throughput(model_id)? * speedup)
}
