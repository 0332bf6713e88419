//! Multi-tenant accelerator memory and throughput model.

use serde::{Deserialize, Serialize};

use crate::profiles::{DeviceProfile, ModelProfile};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenancyModel {
    pub device_id: String,
    pub model_id: String,
    pub per_model_loaded_mb: f64,
    pub quantization_factor: f64,
    pub swap_penalty_per_tenant: f64,
    pub host_footprint_mb: f64,
    pub max_tenants: u32,
}

impl TenancyModel {
    pub fn new(device: &DeviceProfile, model: &ModelProfile) -> Result<Self> {
        Ok(Self {
            device_id: device.id.clone(),
            model_id: model.id.clone(),
            per_model_loaded_mb: loaded_footprint(device, model),
            quantization_factor: weight_factor(device),
            swap_penalty_per_tenant: device.swap_penalty_per_tenant,
            host_footprint_mb: host_footprint(device, model),
            max_tenants: max_tenants(device, model)?,
        })
    }
}

fn weight_factor(device: &DeviceProfile) -> f64 {
    if device.supports_quantization {
        device.quantization_factor
    } else {
        1.0
    }
}

/// Accelerator memory one loaded copy of `model` occupies, in MB.
pub fn loaded_footprint(device: &DeviceProfile, model: &ModelProfile) -> f64 {
    device.framework_overhead_mb + model.model_size_mb * weight_factor(device)
}

/// Host RAM a swapped-out copy occupies: the weights alone.
pub fn host_footprint(device: &DeviceProfile, model: &ModelProfile) -> f64 {
    model.model_size_mb * weight_factor(device)
}

/// Largest number of concurrent copies of `model`, 0 when not even one fits.
pub fn max_tenants(device: &DeviceProfile, model: &ModelProfile) -> Result<u32> {
    let footprint = loaded_footprint(device, model);
    if footprint <= 0.0 {
        return Err(Error::ZeroFootprint {
            device: device.id.clone(),
            model: model.id.clone(),
        });
    }
    let count = if device.supports_host_swap {
        let per = footprint.max(host_footprint(device, model));
        ((device.usable_accel_memory_mb + device.host_ram_mb) / per).floor()
    } else {
        (device.usable_accel_memory_mb / footprint).floor()
    };
    Ok(count.clamp(0.0, f64::from(u32::MAX)) as u32)
}

/// Tenants that can stay resident on the accelerator; at least one, since a
/// swapping device always keeps the active model loaded.
fn resident_capacity(device: &DeviceProfile, footprint: f64) -> u32 {
    ((device.usable_accel_memory_mb / footprint).floor() as u32).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TenancyPoint {
    pub n: u32,
    pub per_tenant_ips: f64,
    pub aggregate_ips: f64,
}

pub fn concurrent_throughput(
    device: &DeviceProfile,
    model: &ModelProfile,
    n: u32,
) -> Result<TenancyPoint> {
    let max = max_tenants(device, model)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "tenant count must be at least 1".into(),
        ));
    }
    if n > max {
        return Err(Error::TooManyTenants {
            device: device.id.clone(),
            requested: n,
            max,
        });
    }
    let base = device.throughput(&model.id)?;
    let resident = resident_capacity(device, loaded_footprint(device, model));
    let swapped = n.saturating_sub(resident);
    let aggregate = base * (1.0 - device.swap_penalty_per_tenant * f64::from(swapped)).max(0.0);
    Ok(TenancyPoint {
        n,
        per_tenant_ips: aggregate / f64::from(n),
        aggregate_ips: aggregate,
    })
}

/// Points for n = 1 up to `max_n`, stopping early at the device limit.
pub fn tenancy_curve(
    device: &DeviceProfile,
    model: &ModelProfile,
    max_n: u32,
) -> Result<Vec<TenancyPoint>> {
    let limit = max_tenants(device, model)?.min(max_n);
    (1..=limit)
        .map(|n| concurrent_throughput(device, model, n))
        .collect()
}

pub const CSV_HEADER: &str = "n,per_tenant_ips,aggregate_ips";

pub fn curve_to_csv(points: &[TenancyPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.n, p.per_tenant_ips, p.aggregate_ips
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::paper_profiles;

    fn pair(device: &str, model: &str) -> (DeviceProfile, ModelProfile) {
        let p = paper_profiles();
        (
            p.device(device).unwrap().clone(),
            p.model(model).unwrap().clone(),
        )
    }

    #[test]
    fn footprints() {
        let (tx2, ssd) = pair("tx2", "ssd_mobilenet_v2");
        assert_eq!(loaded_footprint(&tx2, &ssd), 1244.0);
        let (tpu, ssd) = pair("tpu", "ssd_mobilenet_v2");
        assert_eq!(loaded_footprint(&tpu, &ssd), 16.5);

        let mut empty = ssd.clone();
        empty.model_size_mb = 0.0;
        let mut bare = tpu.clone();
        bare.quantization_factor = 1.0;
        assert_eq!(loaded_footprint(&bare, &empty), 0.0);
        assert!(matches!(
            max_tenants(&bare, &empty),
            Err(Error::ZeroFootprint { .. })
        ));
    }

    #[test]
    fn concurrency_counts() {
        let counts: Vec<_> = ["nano", "tx2", "vpu", "tpu"]
            .iter()
            .map(|d| {
                let (dev, m) = pair(d, "ssd_mobilenet_v2");
                max_tenants(&dev, &m).unwrap()
            })
            .collect();
        assert_eq!(counts, [2, 4, 8, 79]);
    }

    #[test]
    fn too_large_gives_zero() {
        let (mut nano, m) = pair("nano", "ssd_mobilenet_v2");
        nano.usable_accel_memory_mb = 1000.0;
        assert_eq!(max_tenants(&nano, &m).unwrap(), 0);
        assert!(matches!(
            concurrent_throughput(&nano, &m, 1),
            Err(Error::TooManyTenants { max: 0, .. })
        ));
    }

    #[test]
    fn vpu_all_resident() {
        let (vpu, m) = pair("vpu", "ssd_mobilenet_v2");
        let base = vpu.throughput(&m.id).unwrap();
        let p = concurrent_throughput(&vpu, &m, 8).unwrap();
        assert_eq!(p.aggregate_ips, base);
        assert_eq!(p.per_tenant_ips, base / 8.0);
        assert!(concurrent_throughput(&vpu, &m, 9).is_err());
    }

    #[test]
    fn tpu_swapped_penalty() {
        let (tpu, m) = pair("tpu", "ssd_mobilenet_v2");
        let base = tpu.throughput(&m.id).unwrap();
        let one = concurrent_throughput(&tpu, &m, 1).unwrap();
        assert_eq!(one.aggregate_ips, base);
        let p = concurrent_throughput(&tpu, &m, 40).unwrap();
        assert!((p.aggregate_ips / base - 0.805).abs() < 1e-12);
    }

    #[test]
    fn curve_stops_at_limit() {
        let (tx2, m) = pair("tx2", "ssd_mobilenet_v2");
        let curve = tenancy_curve(&tx2, &m, 80).unwrap();
        assert_eq!(curve.len(), 4);
        let csv = curve_to_csv(&curve);
        assert!(csv.starts_with("n,per_tenant_ips,aggregate_ips\n1,"));
    }
}
