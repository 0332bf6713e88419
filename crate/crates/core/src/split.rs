//! Vertical model splitting and memory-driven horizontal partitioning.
//!
//! A cut at index `k` runs layers `0..=k` on the first node and ships layer
//! `k`'s output to the second node, which runs the rest. Per-node latency is
//! the node's whole-model latency scaled by the FLOPs share it executes.

use serde::{Deserialize, Serialize};

use crate::profiles::{DeviceProfile, ModelProfile, NetworkLink};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Bandwidth,
    Latency,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bandwidth" => Ok(Self::Bandwidth),
            "latency" => Ok(Self::Latency),
            other => Err(Error::InvalidArgument(format!(
                "unknown objective `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitKind {
    NonSplit,
    SplitAt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDecision {
    pub kind: SplitKind,
    /// Present iff `kind` is `SplitAt`.
    pub cut_index: Option<usize>,
    /// Bytes crossing the link per request under the chosen option.
    pub transmitted_bytes: u64,
    pub baseline_bytes: u64,
    /// End-to-end latency of the best cut considered for the objective.
    pub latency_split_ms: f64,
    pub latency_nonsplit_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cut {
    pub index: usize,
    pub transmitted_bytes: u64,
}

/// One candidate per layer, in layer order.
pub fn enumerate_cuts(model: &ModelProfile) -> Result<Vec<Cut>> {
    if model.layers.is_empty() {
        return Err(Error::EmptyModel(model.id.clone()));
    }
    Ok(model
        .layers
        .iter()
        .map(|l| Cut {
            index: l.index,
            transmitted_bytes: l.output_bytes,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitLatency {
    pub node1_ms: f64,
    pub transfer_ms: f64,
    pub node2_ms: f64,
}

impl SplitLatency {
    pub fn total_ms(&self) -> f64 {
        self.node1_ms + self.transfer_ms + self.node2_ms
    }
}

pub fn split_latency(
    model: &ModelProfile,
    k: usize,
    node1: &DeviceProfile,
    node2: &DeviceProfile,
    link: &NetworkLink,
) -> Result<SplitLatency> {
    let layer = model.layer(k)?;
    let fraction = layer.cumulative_flops_fraction;
    Ok(SplitLatency {
        node1_ms: node1.inference_ms(&model.id)? * fraction,
        transfer_ms: link.transfer_ms(layer.output_bytes),
        node2_ms: node2.inference_ms(&model.id)? * (1.0 - fraction),
    })
}

/// The whole model on `node`, fed the cheapest encoded input over `link`.
pub fn nonsplit_latency(
    model: &ModelProfile,
    node: &DeviceProfile,
    link: &NetworkLink,
) -> Result<f64> {
    Ok(link.transfer_ms(model.baseline_bytes()) + node.inference_ms(&model.id)?)
}

/// Latencies closer than this are ties. Splitting on one device type
/// reproduces the unsplit time up to rounding, and that must not count as a win.
pub const LATENCY_TIE_MS: f64 = 1e-9;

fn faster(a_ms: f64, b_ms: f64) -> bool {
    a_ms < b_ms - LATENCY_TIE_MS
}

/// Index of the fastest split when it beats `nonsplit_ms` by more than
/// [`LATENCY_TIE_MS`].
///
/// Equal latencies resolve toward non-split, then toward the earliest cut.
pub fn choose_by_latency(splits: &[SplitLatency], nonsplit_ms: f64) -> Option<usize> {
    let (best, best_ms) = fastest(splits)?;
    faster(best_ms, nonsplit_ms).then_some(best)
}

fn fastest(splits: &[SplitLatency]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in splits.iter().enumerate() {
        let total = s.total_ms();
        if best.is_none_or(|(_, ms)| faster(total, ms)) {
            best = Some((i, total));
        }
    }
    best
}

pub fn best_cut(
    model: &ModelProfile,
    objective: Objective,
    node1: &DeviceProfile,
    node2: &DeviceProfile,
    link: &NetworkLink,
) -> Result<SplitDecision> {
    let cuts = enumerate_cuts(model)?;
    let splits = cuts
        .iter()
        .map(|c| split_latency(model, c.index, node1, node2, link))
        .collect::<Result<Vec<_>>>()?;
    let baseline = model.baseline_bytes();
    let nonsplit_ms = nonsplit_latency(model, node2, link)?;

    let (candidate, chosen) = match objective {
        Objective::Bandwidth => {
            let mut min = 0;
            for (i, c) in cuts.iter().enumerate() {
                if c.transmitted_bytes < cuts[min].transmitted_bytes {
                    min = i;
                }
            }
            let wins = cuts[min].transmitted_bytes < baseline;
            (min, wins.then_some(min))
        }
        Objective::Latency => {
            let (fast, _) = fastest(&splits).expect("at least one cut");
            (fast, choose_by_latency(&splits, nonsplit_ms))
        }
    };

    Ok(SplitDecision {
        kind: if chosen.is_some() {
            SplitKind::SplitAt
        } else {
            SplitKind::NonSplit
        },
        cut_index: chosen.map(|i| cuts[i].index),
        transmitted_bytes: chosen.map_or(baseline, |i| cuts[i].transmitted_bytes),
        baseline_bytes: baseline,
        latency_split_ms: splits[candidate].total_ms(),
        latency_nonsplit_ms: nonsplit_ms,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub node_id: String,
    /// First layer index, inclusive.
    pub start: usize,
    /// Last layer index, inclusive.
    pub end: usize,
    pub resident_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub segments: Vec<Segment>,
}

/// Greedy first-fit of layers, in order, onto `nodes`, in order.
///
/// The current segment grows while the next layer still fits the current
/// node; otherwise the segment closes and the next node takes over. A node
/// that cannot hold even the next layer on its own is skipped. Packing
/// each node as full as possible never hurts later nodes, so this finds a
/// partition whenever a contiguous one exists.
pub fn memory_partition(model: &ModelProfile, nodes: &[&DeviceProfile]) -> Result<Partition> {
    if nodes.is_empty() {
        return Err(Error::NoNodes);
    }
    if model.layers.is_empty() {
        return Err(Error::EmptyModel(model.id.clone()));
    }
    let mut segments = Vec::new();
    let mut node = 0;
    let mut current: Option<Segment> = None;

    for layer in &model.layers {
        loop {
            let Some(device) = nodes.get(node) else {
                return Err(Error::InfeasiblePartition {
                    index: layer.index,
                    name: layer.name.clone(),
                    bytes: layer.resident_bytes,
                });
            };
            let capacity = device.usable_accel_bytes();
            let used = current.as_ref().map_or(0, |s| s.resident_bytes);
            if used + layer.resident_bytes <= capacity {
                let seg = current.get_or_insert_with(|| Segment {
                    node_id: device.id.clone(),
                    start: layer.index,
                    end: layer.index,
                    resident_bytes: 0,
                });
                seg.end = layer.index;
                seg.resident_bytes += layer.resident_bytes;
                break;
            }
            segments.extend(current.take());
            node += 1;
        }
    }
    segments.extend(current);
    Ok(Partition { segments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::paper_profiles;
    use crate::profiles::{BYTES_PER_MB, LayerRecord, Tier};

    fn model_with(layers: &[(u64, f64, u64)]) -> ModelProfile {
        ModelProfile {
            id: "m".into(),
            name: String::new(),
            input_bytes_raw: 3000,
            input_bytes_png: 2000,
            input_bytes_jpeg: 1000,
            model_size_mb: 1.0,
            params_millions: 1.0,
            flops_millions: 1.0,
            accuracy: 0.5,
            layers: layers
                .iter()
                .enumerate()
                .map(|(i, &(out, frac, res))| LayerRecord {
                    index: i,
                    name: format!("l{i}"),
                    output_bytes: out,
                    cumulative_flops_fraction: frac,
                    resident_bytes: res,
                })
                .collect(),
        }
    }

    fn node(id: &str, mb: f64) -> DeviceProfile {
        let mut d = paper_profiles().device("tpu").unwrap().clone();
        d.id = id.into();
        d.usable_accel_memory_mb = mb;
        d.per_model_throughput.insert("m".into(), 100.0);
        d
    }

    const MB: u64 = BYTES_PER_MB as u64;

    #[test]
    fn single_layer_zero_bytes() {
        let m = model_with(&[(0, 1.0, 1)]);
        assert_eq!(
            enumerate_cuts(&m).unwrap(),
            vec![Cut {
                index: 0,
                transmitted_bytes: 0
            }]
        );
        let mut empty = m.clone();
        empty.layers.clear();
        assert!(matches!(enumerate_cuts(&empty), Err(Error::EmptyModel(_))));
    }

    #[test]
    fn cut_after_last_layer_runs_everything_on_node1() {
        let p = paper_profiles();
        let m = p.model("mobilenet_v2").unwrap();
        let tpu = p.device("tpu").unwrap();
        let gpu = p.device("gpu").unwrap();
        let link = NetworkLink::ideal("x", Tier::Edge, Tier::Cloud);
        let s = split_latency(m, m.layers.len() - 1, tpu, gpu, &link).unwrap();
        assert_eq!(s.node2_ms, 0.0);
        assert_eq!(s.node1_ms, 1000.0 / 85.64);
        assert_eq!(s.transfer_ms, 0.0);
        assert!(matches!(
            split_latency(m, m.layers.len(), tpu, gpu, &link),
            Err(Error::CutOutOfRange { .. })
        ));
    }

    #[test]
    fn flops_share_example() {
        // cut with 92.5% of FLOPs done: 14.11 ms whole-model edge, 1.45 ms cloud
        let m = model_with(&[(10, 0.5, 1), (10, 0.925, 1), (10, 1.0, 1)]);
        let mut a = node("a", 10.0);
        a.per_model_throughput.insert("m".into(), 1000.0 / 14.11);
        let mut b = node("b", 10.0);
        b.per_model_throughput.insert("m".into(), 1000.0 / 1.45);
        let link = NetworkLink::ideal("x", Tier::Edge, Tier::Cloud);
        let s = split_latency(&m, 1, &a, &b, &link).unwrap();
        assert!((s.node1_ms - 13.05175).abs() < 1e-9);
        assert!((s.node2_ms - 0.10875).abs() < 1e-9);
    }

    #[test]
    fn bandwidth_ties_pick_lowest_index() {
        let m = model_with(&[(500, 0.3, 1), (400, 0.6, 1), (400, 1.0, 1)]);
        let a = node("a", 10.0);
        let link = NetworkLink::ideal("x", Tier::Edge, Tier::Cloud);
        let d = best_cut(&m, Objective::Bandwidth, &a, &a, &link).unwrap();
        assert_eq!(d.kind, SplitKind::SplitAt);
        assert_eq!(d.cut_index, Some(1));
        assert_eq!(d.transmitted_bytes, 400);
        assert_eq!(d.baseline_bytes, 1000);
    }

    #[test]
    fn same_device_split_is_a_tie() {
        let p = tpu_and_mobilenet();
        let (m, tpu) = (&p.0, &p.1);
        let link = NetworkLink::ideal("x", Tier::Edge, Tier::Edge);
        let d = best_cut(m, Objective::Latency, tpu, tpu, &link).unwrap();
        assert_eq!(d.kind, SplitKind::NonSplit);
    }

    fn tpu_and_mobilenet() -> (ModelProfile, DeviceProfile) {
        let p = paper_profiles();
        (
            p.model("mobilenet_v2").unwrap().clone(),
            p.device("tpu").unwrap().clone(),
        )
    }

    #[test]
    fn latency_tie_prefers_nonsplit() {
        let s = SplitLatency {
            node1_ms: 1.0,
            transfer_ms: 0.0,
            node2_ms: 1.0,
        };
        assert_eq!(choose_by_latency(&[s], 2.0), None);
        assert_eq!(choose_by_latency(&[s, s], 2.5), Some(0));
        assert_eq!(choose_by_latency(&[], 2.5), None);
    }

    #[test]
    fn partition_fits_one_node() {
        let p = paper_profiles();
        let inception = p.model("inception_v4").unwrap();
        let vpu = p.device("vpu").unwrap();
        let part = memory_partition(inception, &[vpu]).unwrap();
        assert_eq!(part.segments.len(), 1);
        assert_eq!(
            (part.segments[0].start, part.segments[0].end),
            (0, inception.layers.len() - 1)
        );
    }

    #[test]
    fn partition_forced_single_layer_segments() {
        let m = model_with(&[(1, 0.3, 60 * MB), (1, 0.6, 60 * MB), (1, 1.0, 60 * MB)]);
        let nodes = [node("a", 64.0), node("b", 64.0), node("c", 64.0)];
        let refs: Vec<_> = nodes.iter().collect();
        let part = memory_partition(&m, &refs).unwrap();
        let spans: Vec<_> = part
            .segments
            .iter()
            .map(|s| (s.node_id.as_str(), s.start, s.end))
            .collect();
        assert_eq!(spans, [("a", 0, 0), ("b", 1, 1), ("c", 2, 2)]);
    }

    #[test]
    fn partition_skips_too_small_node() {
        let m = model_with(&[(1, 0.5, 100 * MB), (1, 1.0, 100 * MB)]);
        let nodes = [node("small", 50.0), node("big", 200.0)];
        let refs: Vec<_> = nodes.iter().collect();
        let part = memory_partition(&m, &refs).unwrap();
        assert_eq!(
            part.segments,
            vec![Segment {
                node_id: "big".into(),
                start: 0,
                end: 1,
                resident_bytes: 200 * MB
            }]
        );
    }

    #[test]
    fn partition_infeasible_names_layer() {
        let m = model_with(&[(1, 0.5, 10 * MB), (1, 1.0, 100 * MB)]);
        let nodes = [node("a", 50.0), node("b", 50.0)];
        let refs: Vec<_> = nodes.iter().collect();
        match memory_partition(&m, &refs) {
            Err(Error::InfeasiblePartition { index, name, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(name, "l1");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(memory_partition(&m, &[]), Err(Error::NoNodes)));
    }
}
