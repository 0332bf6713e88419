//! Deterministic discrete-event replay of request traces through a deployment.
//!
//! Every node in a plan is a single FIFO server with deterministic service
//! times; links are pure delays with no contention. The only randomness is
//! confidence sampling for requests whose trace row leaves it blank.

mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::CascadeSpec;
use crate::confidence::ConfidenceDistribution;
use crate::profiles::{NetworkLink, ProfileSet};
use crate::split::memory_partition;
use crate::{Error, Result};

pub use trace::{Request, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PlanVariant {
    /// The whole model on one device, optionally fed over a link.
    NonSplit {
        model: String,
        device: String,
        #[serde(default)]
        link: Option<String>,
    },
    VerticalSplit {
        model: String,
        cut: usize,
        device1: String,
        device2: String,
        link: String,
    },
    Cascade {
        spec: CascadeSpec,
    },
    /// Layers packed first-fit onto peer nodes joined by one intra-tier link.
    HorizontalPartition {
        model: String,
        nodes: Vec<String>,
        link: String,
    },
}

impl PlanVariant {
    fn name(&self) -> &'static str {
        match self {
            Self::NonSplit { .. } => "non_split",
            Self::VerticalSplit { .. } => "vertical_split",
            Self::Cascade { .. } => "cascade",
            Self::HorizontalPartition { .. } => "horizontal_partition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub variant: PlanVariant,
}

impl DeploymentPlan {
    pub fn new(variant: PlanVariant) -> Self {
        Self {
            label: None,
            variant,
        }
    }

    pub fn labelled(label: impl Into<String>, variant: PlanVariant) -> Self {
        Self {
            label: Some(label.into()),
            variant,
        }
    }

    pub fn display_label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.variant.name().to_string())
    }

    pub fn is_cascade(&self) -> bool {
        matches!(self.variant, PlanVariant::Cascade { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub completed: usize,
    pub latency_mean_ms: f64,
    pub latency_p50_ms: f64,
    pub latency_p95_ms: f64,
    pub latency_p99_ms: f64,
    pub bytes_per_link: BTreeMap<String, u64>,
    pub energy_per_device_j: BTreeMap<String, f64>,
    /// Share of requests escalated; cascade plans only.
    pub escalation_fraction_observed: Option<f64>,
}

pub const CSV_HEADER: &str = "plan,completed,latency_mean_ms,latency_p50_ms,latency_p95_ms,latency_p99_ms,total_bytes,total_energy_j,escalation_fraction";

pub fn reports_to_csv(rows: &[(String, SimReport)]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (label, r) in rows {
        let bytes: u64 = r.bytes_per_link.values().sum();
        let energy: f64 = r.energy_per_device_j.values().sum();
        let esc = r
            .escalation_fraction_observed
            .map(|f| f.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{label},{},{},{},{},{},{bytes},{energy},{esc}\n",
            r.completed, r.latency_mean_ms, r.latency_p50_ms, r.latency_p95_ms, r.latency_p99_ms
        ));
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Stage {
    Compute { node: usize, ms: f64 },
    Transfer { link: usize, bytes: u64 },
}

struct Node {
    name: String,
    power_watts: f64,
}

struct CascadeRoute {
    small: Stage,
    link: usize,
    large: Stage,
    threshold: f64,
    confidence: ConfidenceDistribution,
}

enum Route {
    /// Same stages for every request; `None` byte counts take the request's input size.
    Fixed(Vec<FixedStage>),
    Cascade(Box<CascadeRoute>),
}

#[derive(Debug, Clone, Copy)]
enum FixedStage {
    Compute { node: usize, ms: f64 },
    Transfer { link: usize, bytes: Option<u64> },
}

/// A plan with every profile reference resolved to nodes and links.
struct Resolved {
    nodes: Vec<Node>,
    links: Vec<NetworkLink>,
    route: Route,
}

impl Resolved {
    fn add_node(&mut self, profiles: &ProfileSet, id: &str) -> Result<usize> {
        let device = profiles.device(id)?;
        let copies = self
            .nodes
            .iter()
            .filter(|n| n.name == id || n.name.starts_with(&format!("{id}#")))
            .count();
        let name = if copies == 0 {
            id.to_string()
        } else {
            format!("{id}#{}", copies + 1)
        };
        self.nodes.push(Node {
            name,
            power_watts: device.power_watts,
        });
        Ok(self.nodes.len() - 1)
    }

    fn add_link(&mut self, link: NetworkLink) -> usize {
        if let Some(i) = self.links.iter().position(|l| l.id == link.id) {
            return i;
        }
        self.links.push(link);
        self.links.len() - 1
    }
}

fn resolve(profiles: &ProfileSet, plan: &DeploymentPlan) -> Result<Resolved> {
    let mut r = Resolved {
        nodes: Vec::new(),
        links: Vec::new(),
        route: Route::Fixed(Vec::new()),
    };
    let route = match &plan.variant {
        PlanVariant::NonSplit {
            model,
            device,
            link,
        } => {
            profiles.model(model)?;
            let ms = profiles.device(device)?.inference_ms(model)?;
            let mut stages = Vec::new();
            if let Some(link) = link {
                let l = r.add_link(profiles.link(link)?.clone());
                stages.push(FixedStage::Transfer {
                    link: l,
                    bytes: None,
                });
            }
            let node = r.add_node(profiles, device)?;
            stages.push(FixedStage::Compute { node, ms });
            Route::Fixed(stages)
        }
        PlanVariant::VerticalSplit {
            model,
            cut,
            device1,
            device2,
            link,
        } => {
            let m = profiles.model(model)?;
            let layer = m.layer(*cut)?;
            let f = layer.cumulative_flops_fraction;
            let ms1 = profiles.device(device1)?.inference_ms(model)? * f;
            let ms2 = profiles.device(device2)?.inference_ms(model)? * (1.0 - f);
            let n1 = r.add_node(profiles, device1)?;
            let l = r.add_link(profiles.link(link)?.clone());
            let n2 = r.add_node(profiles, device2)?;
            Route::Fixed(vec![
                FixedStage::Compute { node: n1, ms: ms1 },
                FixedStage::Transfer {
                    link: l,
                    bytes: Some(layer.output_bytes),
                },
                FixedStage::Compute { node: n2, ms: ms2 },
            ])
        }
        PlanVariant::HorizontalPartition { model, nodes, link } => {
            let m = profiles.model(model)?;
            let devices = nodes
                .iter()
                .map(|id| profiles.device(id))
                .collect::<Result<Vec<_>>>()?;
            let partition = memory_partition(m, &devices)?;
            let l = r.add_link(profiles.link(link)?.clone());
            let mut stages = Vec::new();
            let mut done = 0.0;
            for (i, seg) in partition.segments.iter().enumerate() {
                let end = m.layer(seg.end)?;
                let ms = profiles.device(&seg.node_id)?.inference_ms(model)?
                    * (end.cumulative_flops_fraction - done);
                done = end.cumulative_flops_fraction;
                let node = r.add_node(profiles, &seg.node_id)?;
                stages.push(FixedStage::Compute { node, ms });
                if i + 1 < partition.segments.len() {
                    stages.push(FixedStage::Transfer {
                        link: l,
                        bytes: Some(end.output_bytes),
                    });
                }
            }
            Route::Fixed(stages)
        }
        PlanVariant::Cascade { spec } => {
            let cascade = spec.resolve(profiles)?;
            let small = r.add_node(profiles, &spec.small.device)?;
            let link = r.add_link(cascade.link.clone());
            let large = r.add_node(profiles, &spec.large.device)?;
            Route::Cascade(Box::new(CascadeRoute {
                small: Stage::Compute {
                    node: small,
                    ms: cascade.small_ms,
                },
                link,
                large: Stage::Compute {
                    node: large,
                    ms: cascade.large_ms,
                },
                threshold: cascade.threshold,
                confidence: cascade.confidence,
            }))
        }
    };
    r.route = route;
    Ok(r)
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    request: usize,
    stage: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed so the max-heap pops the earliest (time, seq) first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Replays `trace` through `plan`. Confidences missing from the trace are
/// drawn in trace order from a generator seeded with `seed`.
pub fn simulate(
    profiles: &ProfileSet,
    plan: &DeploymentPlan,
    trace: &Trace,
    seed: u64,
) -> Result<SimReport> {
    let resolved = resolve(profiles, plan)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut escalated = 0usize;
    let routes: Vec<Vec<Stage>> = trace
        .requests
        .iter()
        .map(|req| match &resolved.route {
            Route::Fixed(stages) => stages
                .iter()
                .map(|s| match *s {
                    FixedStage::Compute { node, ms } => Stage::Compute { node, ms },
                    FixedStage::Transfer { link, bytes } => Stage::Transfer {
                        link,
                        bytes: bytes.unwrap_or(req.input_bytes),
                    },
                })
                .collect(),
            Route::Cascade(c) => {
                let conf = req
                    .confidence_small
                    .unwrap_or_else(|| c.confidence.sample(&mut rng));
                if conf < c.threshold {
                    escalated += 1;
                    vec![
                        c.small,
                        Stage::Transfer {
                            link: c.link,
                            bytes: req.input_bytes,
                        },
                        c.large,
                    ]
                } else {
                    vec![c.small]
                }
            }
        })
        .map(|stages: Vec<Stage>| {
            stages
                .into_iter()
                .filter(|s| !matches!(s, Stage::Compute { ms, .. } if *ms == 0.0))
                .collect()
        })
        .collect();

    let mut heap = BinaryHeap::with_capacity(trace.len());
    let mut seq = 0u64;
    for (i, req) in trace.requests.iter().enumerate() {
        heap.push(Event {
            time: req.arrival_ms,
            seq,
            request: i,
            stage: 0,
        });
        seq += 1;
    }

    let mut free_at = vec![0.0_f64; resolved.nodes.len()];
    let mut busy_ms = vec![0.0_f64; resolved.nodes.len()];
    let mut link_bytes = vec![0u64; resolved.links.len()];
    let mut latencies = Vec::with_capacity(trace.len());

    while let Some(ev) = heap.pop() {
        let Some(stage) = routes[ev.request].get(ev.stage) else {
            latencies.push(ev.time - trace.requests[ev.request].arrival_ms);
            continue;
        };
        let done = match *stage {
            Stage::Compute { node, ms } => {
                let start = ev.time.max(free_at[node]);
                free_at[node] = start + ms;
                busy_ms[node] += ms;
                start + ms
            }
            Stage::Transfer { link, bytes } => {
                link_bytes[link] += bytes;
                ev.time + resolved.links[link].transfer_ms(bytes)
            }
        };
        heap.push(Event {
            time: done,
            seq,
            request: ev.request,
            stage: ev.stage + 1,
        });
        seq += 1;
    }

    let mut report = latency_summary(&mut latencies);
    for (link, bytes) in resolved.links.iter().zip(link_bytes) {
        *report.bytes_per_link.entry(link.id.clone()).or_default() += bytes;
    }
    for (node, ms) in resolved.nodes.iter().zip(busy_ms) {
        report
            .energy_per_device_j
            .insert(node.name.clone(), node.power_watts * ms / 1000.0);
    }
    if plan.is_cascade() && !trace.is_empty() {
        report.escalation_fraction_observed = Some(escalated as f64 / trace.len() as f64);
    }
    Ok(report)
}

fn latency_summary(latencies: &mut [f64]) -> SimReport {
    latencies.sort_by(f64::total_cmp);
    let n = latencies.len();
    let mean = if n == 0 {
        0.0
    } else {
        latencies.iter().sum::<f64>() / n as f64
    };
    SimReport {
        completed: n,
        latency_mean_ms: mean,
        latency_p50_ms: nearest_rank(latencies, 50.0),
        latency_p95_ms: nearest_rank(latencies, 95.0),
        latency_p99_ms: nearest_rank(latencies, 99.0),
        bytes_per_link: BTreeMap::new(),
        energy_per_device_j: BTreeMap::new(),
        escalation_fraction_observed: None,
    }
}

/// Nearest-rank percentile of sorted data; 0 for no data.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Simulates each plan on the same trace and seed, in input order.
pub fn compare(
    profiles: &ProfileSet,
    plans: &[DeploymentPlan],
    trace: &Trace,
    seed: u64,
) -> Result<Vec<(String, SimReport)>> {
    if plans.is_empty() {
        return Err(Error::InvalidArgument(
            "compare needs at least one plan".into(),
        ));
    }
    plans
        .iter()
        .map(|p| Ok((p.display_label(), simulate(profiles, p, trace, seed)?)))
        .collect()
}

/// `n` draws from `dist`, for building traces that record their confidences.
pub fn sample_confidences(dist: &ConfidenceDistribution, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{DistributionRef, LinkRef, Placement};
    use crate::fixtures::{named_cascade, paper_profiles};
    use crate::profiles::Tier;

    fn with_ideal_link(mut p: ProfileSet) -> ProfileSet {
        let mut link = NetworkLink::ideal("ideal", Tier::Edge, Tier::Cloud);
        link.bandwidth_mbps = 1e300;
        p.links.push(link);
        p
    }

    fn nonsplit(device: &str, link: Option<&str>) -> DeploymentPlan {
        DeploymentPlan::new(PlanVariant::NonSplit {
            model: "mobilenet_v2".into(),
            device: device.into(),
            link: link.map(String::from),
        })
    }

    #[test]
    fn empty_trace() {
        let p = paper_profiles();
        let r = simulate(
            &p,
            &nonsplit("tpu", Some("edge-cloud")),
            &Trace::default(),
            1,
        )
        .unwrap();
        assert_eq!(r.completed, 0);
        assert_eq!(r.latency_mean_ms, 0.0);
        assert!(r.bytes_per_link.values().all(|&b| b == 0));
        assert!(r.energy_per_device_j.values().all(|&e| e == 0.0));
    }

    #[test]
    fn single_request_latency() {
        let p = with_ideal_link(paper_profiles());
        let t = Trace::constant_rate(1, 1.0, 1000).unwrap();
        let r = simulate(&p, &nonsplit("tpu", Some("ideal")), &t, 1).unwrap();
        assert!((r.latency_mean_ms - 1000.0 / 85.64).abs() < 1e-9);
        assert!((r.energy_per_device_j["tpu"] - 0.6 / 85.64).abs() < 1e-12);
        assert_eq!(r.bytes_per_link["ideal"], 1000);
    }

    #[test]
    fn fifo_queueing() {
        let p = paper_profiles();
        // three simultaneous requests queue behind each other
        let t = Trace::new(vec![
            Request {
                arrival_ms: 0.0,
                input_bytes: 1,
                confidence_small: None
            };
            3
        ])
        .unwrap();
        let r = simulate(&p, &nonsplit("tpu", None), &t, 1).unwrap();
        let s = 1000.0 / 85.64;
        assert!((r.latency_mean_ms - 2.0 * s).abs() < 1e-9);
        assert!((r.latency_p99_ms - 3.0 * s).abs() < 1e-9);
    }

    #[test]
    fn cascade_all_accepted() {
        let p = paper_profiles();
        let mut spec = named_cascade("edge_cloud").unwrap();
        spec.confidence = DistributionRef::Inline(ConfidenceDistribution::point_mass(0.9));
        spec.threshold = 0.5;
        let plan = DeploymentPlan::new(PlanVariant::Cascade { spec });
        let t = Trace::constant_rate(1000, 10.0, 11274).unwrap();
        let r = simulate(&p, &plan, &t, 3).unwrap();
        assert_eq!(r.escalation_fraction_observed, Some(0.0));
        assert_eq!(r.bytes_per_link["edge-cloud"], 0);
        assert_eq!(r.energy_per_device_j["gpu"], 0.0);
    }

    #[test]
    fn repeated_devices_are_distinct_nodes() {
        let p = paper_profiles();
        let plan = DeploymentPlan::new(PlanVariant::VerticalSplit {
            model: "mobilenet_v2".into(),
            cut: 10,
            device1: "tpu".into(),
            device2: "tpu".into(),
            link: "edge-edge".into(),
        });
        let t = Trace::constant_rate(2, 100.0, 10).unwrap();
        let r = simulate(&p, &plan, &t, 0).unwrap();
        let names: Vec<_> = r.energy_per_device_j.keys().cloned().collect();
        assert_eq!(names, ["tpu", "tpu#2"]);
        assert_eq!(r.bytes_per_link["edge-edge"], 2 * 9800);
    }

    #[test]
    fn cascade_spec_with_same_device_twice() {
        let p = paper_profiles();
        let spec = CascadeSpec {
            description: String::new(),
            small: Placement {
                model: "mobilenet_v2".into(),
                device: "gpu".into(),
                latency_ms: None,
                accuracy: None,
            },
            large: Placement {
                model: "inception_v4".into(),
                device: "gpu".into(),
                latency_ms: None,
                accuracy: None,
            },
            link: LinkRef::Named("edge-cloud".into()),
            threshold: 1.0,
            confidence: DistributionRef::Inline(ConfidenceDistribution::point_mass(0.5)),
            payload_bytes: None,
        };
        let t = Trace::constant_rate(4, 1000.0, 100).unwrap();
        let r = simulate(
            &p,
            &DeploymentPlan::new(PlanVariant::Cascade { spec }),
            &t,
            0,
        )
        .unwrap();
        assert_eq!(r.escalation_fraction_observed, Some(1.0));
        assert_eq!(r.energy_per_device_j.len(), 2);
    }

    #[test]
    fn compare_keeps_order_and_is_deterministic() {
        let p = paper_profiles();
        let spec = named_cascade("edge_cloud").unwrap();
        let plans = vec![
            DeploymentPlan::new(PlanVariant::Cascade { spec: spec.clone() }),
            DeploymentPlan::labelled("again", PlanVariant::Cascade { spec }),
        ];
        let t = Trace::constant_rate(500, 20.0, 11274).unwrap();
        let out = compare(&p, &plans, &t, 42).unwrap();
        assert_eq!(out[0].0, "cascade");
        assert_eq!(out[1].0, "again");
        assert_eq!(out[0].1, out[1].1);
        assert!(compare(&p, &[], &t, 42).is_err());
    }

    #[test]
    fn horizontal_partition_runs_every_layer() {
        let p = paper_profiles();
        let plan = DeploymentPlan::new(PlanVariant::HorizontalPartition {
            model: "inception_v4".into(),
            nodes: vec!["tpu".into(), "tpu".into()],
            link: "edge-edge".into(),
        });
        // inception does not fit the tpu's 8 MB
        assert!(matches!(
            simulate(&p, &plan, &Trace::constant_rate(1, 1.0, 1).unwrap(), 0),
            Err(Error::InfeasiblePartition { .. })
        ));
        let plan = DeploymentPlan::new(PlanVariant::HorizontalPartition {
            model: "inception_v4".into(),
            nodes: vec!["vpu".into()],
            link: "edge-edge".into(),
        });
        let r = simulate(&p, &plan, &Trace::constant_rate(1, 1.0, 1).unwrap(), 0).unwrap();
        let full = p
            .device("vpu")
            .unwrap()
            .inference_ms("inception_v4")
            .unwrap();
        assert!((r.latency_mean_ms - full).abs() < 1e-9);
    }

    #[test]
    fn plan_json_shape() {
        let json = r#"{"label":"a","variant":"non_split","model":"mobilenet_v2","device":"tpu"}"#;
        let plan: DeploymentPlan =
            crate::profiles::parse_json(json, crate::ParseMode::Strict).unwrap();
        assert_eq!(
            plan,
            DeploymentPlan::labelled(
                "a",
                PlanVariant::NonSplit {
                    model: "mobilenet_v2".into(),
                    device: "tpu".into(),
                    link: None,
                }
            )
        );
        let bad = r#"{"variant":"non_split","model":"m","device":"d","extra":1}"#;
        assert!(
            crate::profiles::parse_json::<DeploymentPlan>(bad, crate::ParseMode::Strict).is_err()
        );
    }
}
