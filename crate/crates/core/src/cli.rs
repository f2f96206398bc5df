//! Run configuration, overrides and the command implementations behind the
//! `tiersim` binary.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::arch::{build_system, preset, validate_spec, SystemSpec, Violation};
use crate::engine::{mix_seed, Ps};
use crate::interconnect::{mean_hop_count, parse_dims, ratio_to_f64};
use crate::metrics::{
    emit_report, report_to_string, write_latency_csv, LatencySample, Meta, Report,
};
use crate::workload::{
    format_messages, format_trace, gen_message_traffic, gen_synthetic_trace, parse_messages,
    parse_trace, MessageRecord, MessageTraffic, SyntheticTrace, TraceRecord,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("invalid system:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("simulation fault: {0}")]
    Runtime(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for user or configuration errors, 1 for faults during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// Trace CSV, relative to the config file.
    #[serde(default)]
    pub trace: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticTrace>,
    /// Message CSV, relative to the config file.
    #[serde(default)]
    pub messages: Option<String>,
    #[serde(default)]
    pub message_traffic: Option<MessageTraffic>,
}

fn bucket() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub seed: u64,
    /// Stop time; runs to completion when absent.
    #[serde(default)]
    pub t_end_ps: Option<Ps>,
    #[serde(default = "bucket")]
    pub histogram_bucket_ps: u64,
    /// Report path, relative to the working directory.
    #[serde(default)]
    pub out: Option<String>,
}

impl RunConfig {
    /// A preset system with a modest synthetic workload on every core.
    pub fn from_preset(name: &str) -> Option<Self> {
        let system = preset(name)?;
        let clusters = system.clusters();
        let workload = WorkloadSpec {
            synthetic: Some(SyntheticTrace {
                cores: system.total_cores(),
                length: 2000,
                hot_fraction: 0.9,
                hot_set_bytes: 16 * 1024,
                read_fraction: 2.0 / 3.0,
                access_size: 8,
                shared_hot_set: false,
            }),
            message_traffic: (clusters > 1).then_some(MessageTraffic {
                clusters,
                cycles: 20_000,
                rate: 0.002,
                payload: 64,
            }),
            ..WorkloadSpec::default()
        };
        Some(RunConfig {
            system,
            workload,
            seed: 1,
            t_end_ps: None,
            histogram_bucket_ps: bucket(),
            out: None,
        })
    }
}

/// Parses `v` as JSON, falling back to a plain string.
pub fn parse_value(v: &str) -> Value {
    serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()))
}

fn lookup_mut<'a>(root: &'a mut Value, segments: &[&str]) -> Option<&'a mut Value> {
    segments.iter().try_fold(root, |node, seg| match node {
        Value::Object(map) => map.get_mut(*seg),
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
        _ => None,
    })
}

/// Replaces the value at a dotted path. Paths whose first segment is not a
/// top-level key resolve inside `system`, so `l2.tech` means
/// `system.l2.tech`. Every segment must already exist.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::Usage(format!("malformed path `{path}`")));
    }
    let top_level = root.get(segments[0]).is_some();
    let slot = if top_level {
        lookup_mut(root, &segments)
    } else {
        root.get_mut("system")
            .and_then(|s| lookup_mut(s, &segments))
    };
    match slot {
        Some(slot) => {
            *slot = value;
            Ok(())
        }
        None => Err(CliError::Usage(format!(
            "path `{path}` does not resolve in the config"
        ))),
    }
}

/// Applies one `a.b.c=v` assignment.
pub fn apply_assignment(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, v) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected path=value, got `{assignment}`")))?;
    set_path(root, path.trim(), parse_value(v.trim()))
}

/// Fully defaulted JSON form of a config, so that every field has a path.
pub fn config_value(config: &RunConfig) -> Value {
    serde_json::to_value(config).expect("config serializes")
}

pub fn config_from_value(value: Value) -> Result<RunConfig, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
}

/// Reads a config file (or a bare preset name) and applies overrides.
/// Returns the config and the directory its relative paths refer to.
pub fn load_run_config(
    path: &Path,
    overrides: &[String],
) -> Result<(RunConfig, PathBuf), CliError> {
    let (config, base) = match std::fs::read_to_string(path) {
        Ok(text) => {
            let config: RunConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (config, base)
        }
        Err(e) => match path.to_str().and_then(RunConfig::from_preset) {
            Some(c) => (c, PathBuf::new()),
            None => return Err(CliError::Config(format!("{}: {e}", path.display()))),
        },
    };
    if overrides.is_empty() {
        return Ok((config, base));
    }
    let mut value = config_value(&config);
    for o in overrides {
        apply_assignment(&mut value, o)?;
    }
    Ok((config_from_value(value)?, base))
}

fn read_file(base: &Path, rel: &str) -> Result<String, CliError> {
    let p = base.join(rel);
    std::fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

pub fn load_workload(
    config: &RunConfig,
    base: &Path,
) -> Result<(Vec<TraceRecord>, Vec<MessageRecord>), CliError> {
    let w = &config.workload;
    let cfg = |e: crate::workload::WorkloadError| CliError::Config(e.to_string());
    let trace = match (&w.trace, &w.synthetic) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "workload: give either trace or synthetic".into(),
            ))
        }
        (Some(p), None) => {
            parse_trace(&read_file(base, p)?).map_err(|e| CliError::Config(format!("{p}: {e}")))?
        }
        (None, Some(s)) => gen_synthetic_trace(s, config.seed).map_err(cfg)?,
        (None, None) => Vec::new(),
    };
    let messages = match (&w.messages, &w.message_traffic) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "workload: give either messages or message_traffic".into(),
            ));
        }
        (Some(p), None) => parse_messages(&read_file(base, p)?)
            .map_err(|e| CliError::Config(format!("{p}: {e}")))?,
        (None, Some(m)) => gen_message_traffic(m, config.seed).map_err(cfg)?,
        (None, None) => Vec::new(),
    };
    Ok((trace, messages))
}

/// Validates, builds and runs one configuration.
pub fn simulate(config: &RunConfig, base: &Path) -> Result<(Report, Vec<LatencySample>), CliError> {
    let violations = validate_spec(&config.system);
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations));
    }
    let (trace, messages) = load_workload(config, base)?;
    let mut system =
        build_system(&config.system, config.seed).map_err(|e| CliError::Config(e.to_string()))?;
    system
        .load_trace(&trace)
        .and_then(|_| system.load_messages(&messages))
        .map_err(|e| CliError::Config(e.to_string()))?;
    system
        .run(config.t_end_ps)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let meta = Meta::now(config.seed, config_value(config));
    let report = system.report(meta, config.histogram_bucket_ps);
    Ok((report, system.latency_samples().to_vec()))
}

pub struct RunOutcome {
    pub report_path: Option<PathBuf>,
    pub report_json: String,
}

/// `run`: simulate and write the report to `config.out` (stdout when absent).
pub fn execute_run(
    config: &RunConfig,
    base: &Path,
    dump_latencies: Option<&Path>,
) -> Result<RunOutcome, CliError> {
    let (report, samples) = simulate(config, base)?;
    let io = |e: crate::metrics::MetricsError| CliError::Io(e.to_string());
    if let Some(p) = dump_latencies {
        write_latency_csv(&samples, p).map_err(io)?;
    }
    let report_json = report_to_string(&report).map_err(io)?;
    let report_path = match &config.out {
        Some(out) => {
            let p = PathBuf::from(out);
            emit_report(&report, &p).map_err(io)?;
            Some(p)
        }
        None => None,
    };
    Ok(RunOutcome {
        report_path,
        report_json,
    })
}

/// Directory name for a sweep value.
pub fn value_dir(v: &str) -> String {
    v.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: &str =
    "value,seed,duration_ps,total_energy_nj,l1_misses,bus_transactions,mean_core_read_ps,max_write_count,worn_blocks";

fn summary_row(value: &str, r: &Report) -> String {
    let read = r
        .latency
        .get("core_read")
        .and_then(|s| s.mean)
        .map(|m| m.to_string())
        .unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{}",
        value,
        r.meta.seed,
        r.duration_ps,
        r.total_energy_nj,
        r.interconnect.l1_misses,
        r.interconnect.bus.transactions,
        read,
        r.endurance.max_write_count,
        r.endurance.worn_blocks
    )
}

/// Thread cap for sweeps from `TIERSIM_THREADS`; `None` uses every core.
pub fn sweep_threads() -> Option<usize> {
    std::env::var("TIERSIM_THREADS")
        .ok()?
        .parse()
        .ok()
        .filter(|n| *n > 0)
}

/// `sweep`: one run per value of `param`, each with seed
/// `mix_seed(base seed, index)`, written to `<out>/<value>/report.json`
/// plus `<out>/summary.csv`.
pub fn execute_sweep(
    base_config: &RunConfig,
    base: &Path,
    param: &str,
    values: &[String],
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<Vec<PathBuf>, CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    let root = config_value(base_config);
    let mut configs = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let mut value = root.clone();
        set_path(&mut value, param, parse_value(v))?;
        let mut config = config_from_value(value)?;
        config.seed = mix_seed(base_config.seed, i as u64);
        config.out = None;
        configs.push(config);
    }
    // fail fast on invalid points before spending time on any run
    for (v, c) in values.iter().zip(&configs) {
        let violations = validate_spec(&c.system);
        if !violations.is_empty() {
            eprintln!("sweep value `{v}` is invalid");
            return Err(CliError::Invalid(violations));
        }
    }

    let run_all = || -> Vec<Result<Report, CliError>> {
        configs
            .par_iter()
            .map(|c| simulate(c, base).map(|(r, _)| r))
            .collect()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(run_all),
        None => run_all(),
    };

    let mut summary = vec![SUMMARY_HEADER.to_string()];
    let mut paths = Vec::new();
    for (v, r) in values.iter().zip(results) {
        let report = r?;
        let path = out_dir.join(value_dir(v)).join("report.json");
        emit_report(&report, &path).map_err(|e| CliError::Io(e.to_string()))?;
        summary.push(summary_row(v, &report));
        paths.push(path);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(out_dir.join("summary.csv"), summary.join("\n") + "\n")
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(paths)
}

/// `hops`: exact mean hop count printed with four decimals.
pub fn hops_line(dims: &str) -> Result<String, CliError> {
    let dims = parse_dims(dims).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(format!("{:.4}", ratio_to_f64(mean_hop_count(dims))))
}

/// `gen-trace` in trace mode.
pub fn gen_trace_text(params: &SyntheticTrace, seed: u64) -> Result<String, CliError> {
    gen_synthetic_trace(params, seed)
        .map(|t| format_trace(&t))
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// `gen-trace` in message mode.
pub fn gen_messages_text(params: &MessageTraffic, seed: u64) -> Result<String, CliError> {
    gen_message_traffic(params, seed)
        .map(|m| format_messages(&m))
        .map_err(|e| CliError::Usage(e.to_string()))
}
