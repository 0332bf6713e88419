//! Command-line front end for the `tierplan` planners and simulator.
//!
//! [`run`] is the whole program minus process setup, so tests can drive it
//! with in-memory streams.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, anyhow};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tierplan::cascade::{self, CascadeSpec};
use tierplan::fixtures;
use tierplan::metrics::{self, RankKey};
use tierplan::profiles::parse_json;
use tierplan::sim::{self, DeploymentPlan, Trace};
use tierplan::split::{self, Objective};
use tierplan::tenancy;
use tierplan::{Error, ParseMode, ProfileSet};

/// Directory searched for `--profiles NAME` when NAME is not a path.
pub const PROFILE_DIR_ENV: &str = "TIERPLAN_PROFILE_DIR";

#[derive(Debug, Parser)]
#[command(name = "tierplan", version)]
#[command(about = "Plan and simulate DNN inference across device, edge and cloud tiers")]
struct Cli {
    /// Profile set: a JSON path, a file name under $TIERPLAN_PROFILE_DIR, or `paper_profiles`.
    #[arg(long, global = true, default_value = "paper_profiles")]
    profiles: String,

    /// Ignore unknown keys in input files instead of rejecting them.
    #[arg(long, global = true)]
    lenient: bool,

    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Shorthand for `--format csv`.
    #[arg(long, global = true, conflicts_with = "format")]
    csv: bool,

    /// Seed for confidence sampling in simulate/compare.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank devices for one model by a raw or normalized metric.
    Rank {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "perf_per_watt")]
        key: String,
    },
    /// Choose a vertical split point, or pack layers onto nodes with --nodes.
    PlanSplit {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "bandwidth", conflicts_with = "nodes")]
        objective: String,
        #[arg(long, required_unless_present = "nodes")]
        node1: Option<String>,
        #[arg(long, required_unless_present = "nodes")]
        node2: Option<String>,
        #[arg(long, required_unless_present = "nodes")]
        link: Option<String>,
        /// Comma-separated node devices for memory partitioning.
        #[arg(long, value_delimiter = ',')]
        nodes: Option<Vec<String>>,
    },
    /// Analyze a cascade spec (a JSON path or a bundled name).
    PlanCascade {
        #[arg(long)]
        spec: String,
        /// Cloud-latency sweep `start:stop:step` in ms, emitted as CSV.
        #[arg(long, conflicts_with = "thresholds")]
        sweep: Option<String>,
        /// Threshold sweep `start:stop:step`, emitted as CSV.
        #[arg(long)]
        thresholds: Option<String>,
    },
    /// Aggregate and per-tenant throughput against tenant count.
    Tenancy {
        #[arg(long)]
        device: String,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 80)]
        max_n: u32,
    },
    /// Replay a trace through one deployment plan.
    Simulate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Replay one trace through several plans (a JSON array).
    Compare {
        #[arg(long)]
        plans: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Check a profile set against every invariant.
    Validate,
}

/// Errors the caller caused through arguments rather than input content.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Runs the program; returns the process exit code.
///
/// 0 on success, 1 when inputs are well formed but invalid or infeasible,
/// 2 on usage and parse errors. Reports go to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let validating = matches!(cli.command, Command::Validate);
    let mut out = Vec::new();
    match execute(&cli, &mut out) {
        Ok(()) => match stdout.write_all(&out) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(stderr, "error: writing output: {e}");
                1
            }
        },
        Err(e) => {
            report(&e, stderr);
            exit_code(&e, validating)
        }
    }
}

fn report(e: &anyhow::Error, stderr: &mut dyn Write) {
    let _ = writeln!(stderr, "error: {e:#}");
    if let Some(Error::Invalid(violations)) = e.downcast_ref::<Error>() {
        for v in violations {
            let _ = writeln!(stderr, "  {v}");
        }
    }
}

fn exit_code(e: &anyhow::Error, validating: bool) -> i32 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(
            Error::Invalid(_)
            | Error::DanglingReference { .. }
            | Error::InfeasiblePartition { .. }
            | Error::NoNodes
            | Error::ZeroFootprint { .. }
            | Error::TooManyTenants { .. }
            | Error::MissingThroughput { .. }
            | Error::EmptyCalibration { .. }
            | Error::EmptyModel(_),
        ) => 1,
        // a broken profile file is the failure `validate` exists to report
        Some(Error::Parse(_) | Error::UnknownKeys(_)) if validating => 1,
        _ => 2,
    }
}

impl Cli {
    fn mode(&self) -> ParseMode {
        if self.lenient {
            ParseMode::Lenient
        } else {
            ParseMode::Strict
        }
    }

    fn format_or(&self, default: Format) -> Format {
        if self.csv {
            Format::Csv
        } else {
            self.format.unwrap_or(default)
        }
    }
}

fn execute(cli: &Cli, out: &mut Vec<u8>) -> anyhow::Result<()> {
    let profiles = load_profile_set(&cli.profiles, cli.mode())?;
    match &cli.command {
        Command::Rank { model, key } => {
            let key: RankKey = key.parse().map_err(|e: Error| usage(e.to_string()))?;
            let rows = metrics::rank(&profiles, model, key)?;
            match cli.format_or(Format::Csv) {
                Format::Csv => out.extend_from_slice(metrics::rows_to_csv(&rows).as_bytes()),
                Format::Json => write_json(out, &rows)?,
            }
        }
        Command::PlanSplit {
            model,
            objective,
            node1,
            node2,
            link,
            nodes,
        } => {
            let m = profiles.model(model)?;
            if let Some(nodes) = nodes {
                let devices = nodes
                    .iter()
                    .map(|id| profiles.device(id))
                    .collect::<Result<Vec<_>, _>>()?;
                let partition = split::memory_partition(m, &devices)?;
                match cli.format_or(Format::Json) {
                    Format::Json => write_json(out, &partition)?,
                    Format::Csv => {
                        let mut text = String::from("node,start,end,resident_bytes\n");
                        for s in &partition.segments {
                            text.push_str(&format!(
                                "{},{},{},{}\n",
                                s.node_id, s.start, s.end, s.resident_bytes
                            ));
                        }
                        out.extend_from_slice(text.as_bytes());
                    }
                }
                return Ok(());
            }
            let objective: Objective =
                objective.parse().map_err(|e: Error| usage(e.to_string()))?;
            let (Some(n1), Some(n2), Some(link)) = (node1, node2, link) else {
                return Err(usage("--node1, --node2 and --link are required"));
            };
            let decision = split::best_cut(
                m,
                objective,
                profiles.device(n1)?,
                profiles.device(n2)?,
                profiles.link(link)?,
            )?;
            match cli.format_or(Format::Json) {
                Format::Json => write_json(out, &decision)?,
                Format::Csv => {
                    let cut = decision
                        .cut_index
                        .map(|k| k.to_string())
                        .unwrap_or_default();
                    let text = format!(
                        "kind,cut_index,transmitted_bytes,baseline_bytes,latency_split_ms,latency_nonsplit_ms\n{:?},{cut},{},{},{},{}\n",
                        decision.kind,
                        decision.transmitted_bytes,
                        decision.baseline_bytes,
                        decision.latency_split_ms,
                        decision.latency_nonsplit_ms
                    );
                    out.extend_from_slice(text.as_bytes());
                }
            }
        }
        Command::PlanCascade {
            spec,
            sweep,
            thresholds,
        } => {
            let spec = load_cascade_spec(spec, cli.mode())?;
            let c = spec.resolve(&profiles)?;
            if let Some(range) = sweep {
                let grid = parse_range(range)?;
                let rows = cascade::latency_sweep(&c, &grid)?;
                let mut text = String::from(
                    "cloud_latency_ms,expected_latency_ms,nonsplit_latency_ms,reduction\n",
                );
                for r in rows {
                    text.push_str(&format!(
                        "{},{},{},{}\n",
                        r.cloud_latency_ms,
                        r.expected_latency_ms,
                        r.nonsplit_latency_ms,
                        r.reduction
                    ));
                }
                out.extend_from_slice(text.as_bytes());
            } else if let Some(range) = thresholds {
                let grid = parse_range(range)?;
                let rows = cascade::threshold_sweep(&c, &grid)?;
                let mut text = String::from(
                    "threshold,escalation_fraction,expected_bytes,savings_fraction,expected_latency_ms,nonsplit_latency_ms\n",
                );
                for r in rows {
                    text.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        r.threshold,
                        r.escalation_fraction,
                        r.expected_bytes,
                        r.savings_fraction,
                        r.expected_latency_ms,
                        r.nonsplit_latency_ms
                    ));
                }
                out.extend_from_slice(text.as_bytes());
            } else {
                let a = cascade::analyze(&c)?;
                match cli.format_or(Format::Json) {
                    Format::Json => write_json(out, &a)?,
                    Format::Csv => {
                        let cross = a
                            .crossover_threshold
                            .map(|t| t.to_string())
                            .unwrap_or_default();
                        let text = format!(
                            "threshold,escalation_fraction,expected_bytes,savings_fraction,expected_latency_ms,nonsplit_latency_ms,expected_accuracy,crossover_threshold\n{},{},{},{},{},{},{},{cross}\n",
                            a.threshold,
                            a.escalation_fraction,
                            a.expected_bytes,
                            a.savings_fraction,
                            a.expected_latency_ms,
                            a.nonsplit_latency_ms,
                            a.expected_accuracy
                        );
                        out.extend_from_slice(text.as_bytes());
                    }
                }
            }
        }
        Command::Tenancy {
            device,
            model,
            max_n,
        } => {
            let d = profiles.device(device)?;
            let m = profiles.model(model)?;
            let curve = tenancy::tenancy_curve(d, m, *max_n)?;
            match cli.format_or(Format::Csv) {
                Format::Csv => out.extend_from_slice(tenancy::curve_to_csv(&curve).as_bytes()),
                Format::Json => write_json(out, &curve)?,
            }
        }
        Command::Simulate { plan, trace } => {
            let plan: DeploymentPlan = load_json(plan, cli.mode())?;
            let trace = Trace::from_path(trace)?;
            let seed = seed_for(cli.seed, std::slice::from_ref(&plan), &trace)?;
            let report = sim::simulate(&profiles, &plan, &trace, seed)?;
            match cli.format_or(Format::Json) {
                Format::Json => write_json(out, &report)?,
                Format::Csv => {
                    let rows = [(plan.display_label(), report)];
                    out.extend_from_slice(sim::reports_to_csv(&rows).as_bytes());
                }
            }
        }
        Command::Compare { plans, trace } => {
            let plans: Vec<DeploymentPlan> = load_json(plans, cli.mode())?;
            let trace = Trace::from_path(trace)?;
            let seed = seed_for(cli.seed, &plans, &trace)?;
            let rows = sim::compare(&profiles, &plans, &trace, seed)?;
            match cli.format_or(Format::Json) {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Row<'a> {
                        plan: &'a str,
                        report: &'a sim::SimReport,
                    }
                    let rows: Vec<_> = rows
                        .iter()
                        .map(|(plan, report)| Row { plan, report })
                        .collect();
                    write_json(out, &rows)?;
                }
                Format::Csv => out.extend_from_slice(sim::reports_to_csv(&rows).as_bytes()),
            }
        }
        Command::Validate => {
            #[derive(Serialize)]
            struct Summary {
                valid: bool,
                devices: usize,
                models: usize,
                links: usize,
                distributions: usize,
            }
            write_json(
                out,
                &Summary {
                    valid: true,
                    devices: profiles.devices.len(),
                    models: profiles.models.len(),
                    links: profiles.links.len(),
                    distributions: profiles.distributions.len(),
                },
            )?;
        }
    }
    Ok(())
}

/// Cascade plans sample missing confidences, and a silent default seed would
/// make such runs look reproducible when the caller never chose one.
fn seed_for(seed: Option<u64>, plans: &[DeploymentPlan], trace: &Trace) -> anyhow::Result<u64> {
    match seed {
        Some(s) => Ok(s),
        None if plans.iter().any(DeploymentPlan::is_cascade) && !trace.has_all_confidences() => {
            Err(usage(
                "--seed is required when a cascade plan runs on a trace without confidence_small",
            ))
        }
        None => Ok(0),
    }
}

fn write_json<T: Serialize + ?Sized>(out: &mut Vec<u8>, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    out.push(b'\n');
    Ok(())
}

fn read_file(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|source| {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn load_json<T: serde::de::DeserializeOwned + Serialize>(
    path: &Path,
    mode: ParseMode,
) -> anyhow::Result<T> {
    let text = read_file(path)?;
    parse_json(&text, mode).with_context(|| format!("in {}", path.display()))
}

/// Resolves `--profiles`: an existing path, then a name under
/// [`PROFILE_DIR_ENV`] (with or without `.json`), then a bundled set.
fn load_profile_set(name: &str, mode: ParseMode) -> anyhow::Result<ProfileSet> {
    let path = Path::new(name);
    if path.is_file() {
        return from_file(path, mode);
    }
    if let Some(dir) = std::env::var_os(PROFILE_DIR_ENV) {
        let dir = PathBuf::from(dir);
        for candidate in [dir.join(name), dir.join(format!("{name}.json"))] {
            if candidate.is_file() {
                return from_file(&candidate, mode);
            }
        }
    }
    fixtures::named_profiles(name).ok_or_else(|| {
        anyhow!(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no such file or bundled profile set"
            ),
        })
    })
}

fn from_file(path: &Path, mode: ParseMode) -> anyhow::Result<ProfileSet> {
    let text = read_file(path)?;
    let set =
        ProfileSet::from_json_str(&text, mode).with_context(|| format!("in {}", path.display()))?;
    Ok(set.validated()?)
}

fn load_cascade_spec(name: &str, mode: ParseMode) -> anyhow::Result<CascadeSpec> {
    let path = Path::new(name);
    if !path.is_file()
        && let Some(spec) = fixtures::named_cascade(name)
    {
        return Ok(spec);
    }
    load_json(path, mode)
}

/// Inclusive `start:stop:step` grid.
fn parse_range(text: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("range `{text}` is not start:stop:step")))?;
    let [start, stop, step] = parts[..] else {
        return Err(usage(format!("range `{text}` is not start:stop:step")));
    };
    if !(step > 0.0 && start.is_finite() && stop.is_finite() && stop >= start) {
        return Err(usage(format!(
            "range `{text}` needs step > 0 and stop >= start"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("20:200:20").unwrap().len(), 10);
        assert_eq!(
            parse_range("0:1:0.25").unwrap(),
            [0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(parse_range("5:5:1").unwrap(), [5.0]);
        for bad in ["1:2", "a:b:c", "2:1:1", "0:1:0"] {
            assert!(parse_range(bad).is_err(), "{bad}");
        }
    }
}
