//! Memory-access traces, inter-cluster message lists and their synthetic
//! generators.
//!
//! Trace files are CSV with the header `tick,core,op,addr,size`; message
//! files use `tick,src_cluster,dst_cluster,bytes`. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::component_rng;

pub const TRACE_HEADER: &str = "tick,core,op,addr,size";
pub const MESSAGE_HEADER: &str = "tick,src_cluster,dst_cluster,bytes";

/// Physical address width.
pub const ADDRESS_BITS: u32 = 48;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid generator parameter: {0}")]
    Param(String),
}

fn parse_err(line: usize, reason: impl Into<String>) -> WorkloadError {
    WorkloadError::Parse {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    R,
    W,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// earliest issue cycle, core clock
    pub tick: u64,
    pub core: u32,
    pub op: Op,
    pub addr: u64,
    pub size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    /// NoC clock cycle
    pub tick: u64,
    pub src_cluster: u32,
    pub dst_cluster: u32,
    pub bytes: u64,
}

fn is_skipped(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

fn fields<const N: usize>(line: &str, lineno: usize) -> Result<[&str; N], WorkloadError> {
    let parts: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    parts.try_into().map_err(|p: Vec<&str>| {
        parse_err(lineno, format!("expected {N} fields, found {}", p.len()))
    })
}

fn number<T: std::str::FromStr>(s: &str, name: &str, lineno: usize) -> Result<T, WorkloadError> {
    s.parse()
        .map_err(|_| parse_err(lineno, format!("bad {name} `{s}`")))
}

/// Parses one trace line. Comments and blank lines yield `Ok(None)`.
pub fn parse_trace_line(line: &str, lineno: usize) -> Result<Option<TraceRecord>, WorkloadError> {
    if is_skipped(line) {
        return Ok(None);
    }
    let [tick, core, op, addr, size] = fields::<5>(line, lineno)?;
    let op = match op {
        "R" => Op::R,
        "W" => Op::W,
        other => {
            return Err(parse_err(
                lineno,
                format!("bad op `{other}` (expected R or W)"),
            ))
        }
    };
    let hex = addr
        .strip_prefix("0x")
        .or_else(|| addr.strip_prefix("0X"))
        .ok_or_else(|| parse_err(lineno, format!("address `{addr}` lacks 0x prefix")))?;
    let addr = u64::from_str_radix(hex, 16)
        .map_err(|_| parse_err(lineno, format!("bad address `{addr}`")))?;
    if addr >> ADDRESS_BITS != 0 {
        return Err(parse_err(lineno, "address exceeds 48 bits"));
    }
    let size: u32 = number(size, "size", lineno)?;
    if size == 0 {
        return Err(parse_err(lineno, "size must be positive"));
    }
    Ok(Some(TraceRecord {
        tick: number(tick, "tick", lineno)?,
        core: number(core, "core", lineno)?,
        op,
        addr,
        size,
    }))
}

fn check_header(text: &str, header: &str) -> Result<usize, WorkloadError> {
    for (i, line) in text.lines().enumerate() {
        if is_skipped(line) {
            continue;
        }
        let normalized: String = line.split(',').map(str::trim).collect::<Vec<_>>().join(",");
        if normalized != header {
            return Err(parse_err(i + 1, format!("expected header `{header}`")));
        }
        return Ok(i + 1);
    }
    Err(parse_err(1, format!("missing header `{header}`")))
}

/// Parses a whole trace file, validating the header and per-core tick order.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, WorkloadError> {
    let header_line = check_header(text, TRACE_HEADER)?;
    let mut out = Vec::new();
    let mut last_tick: Vec<Option<u64>> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(header_line) {
        let Some(rec) = parse_trace_line(line, i + 1)? else {
            continue;
        };
        let core = rec.core as usize;
        if last_tick.len() <= core {
            last_tick.resize(core + 1, None);
        }
        if last_tick[core].is_some_and(|t| rec.tick < t) {
            return Err(parse_err(i + 1, format!("tick decreases for core {core}")));
        }
        last_tick[core] = Some(rec.tick);
        out.push(rec);
    }
    Ok(out)
}

pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 24 + 32);
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in records {
        let op = match r.op {
            Op::R => 'R',
            Op::W => 'W',
        };
        let _ = writeln!(s, "{},{},{},{:#x},{}", r.tick, r.core, op, r.addr, r.size);
    }
    s
}

pub fn parse_messages(text: &str) -> Result<Vec<MessageRecord>, WorkloadError> {
    let header_line = check_header(text, MESSAGE_HEADER)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(header_line) {
        if is_skipped(line) {
            continue;
        }
        let lineno = i + 1;
        let [tick, src, dst, bytes] = fields::<4>(line, lineno)?;
        let rec = MessageRecord {
            tick: number(tick, "tick", lineno)?,
            src_cluster: number(src, "src_cluster", lineno)?,
            dst_cluster: number(dst, "dst_cluster", lineno)?,
            bytes: number(bytes, "bytes", lineno)?,
        };
        if rec.src_cluster == rec.dst_cluster {
            return Err(parse_err(lineno, "source and destination cluster coincide"));
        }
        if rec.bytes == 0 {
            return Err(parse_err(lineno, "bytes must be positive"));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn format_messages(records: &[MessageRecord]) -> String {
    let mut s = String::from(MESSAGE_HEADER);
    s.push('\n');
    for m in records {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            m.tick, m.src_cluster, m.dst_cluster, m.bytes
        );
    }
    s
}

fn default_read_fraction() -> f64 {
    2.0 / 3.0
}

fn default_access_size() -> u32 {
    8
}

/// Hot-set locality generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTrace {
    pub cores: u32,
    /// accesses per core
    pub length: u64,
    /// probability that an access falls in the core's hot set
    pub hot_fraction: f64,
    /// bytes
    pub hot_set_bytes: u64,
    #[serde(default = "default_read_fraction")]
    pub read_fraction: f64,
    #[serde(default = "default_access_size")]
    pub access_size: u32,
    /// All cores share one hot set instead of disjoint ones.
    #[serde(default)]
    pub shared_hot_set: bool,
}

impl SyntheticTrace {
    pub fn hot_base(&self, core: u32) -> u64 {
        if self.shared_hot_set {
            0
        } else {
            u64::from(core) * self.hot_set_bytes.next_multiple_of(4096)
        }
    }
}

/// Generates `length` accesses per core; the i-th access of every core is
/// stamped with tick i. Deterministic in `(params, seed)`.
pub fn gen_synthetic_trace(
    params: &SyntheticTrace,
    seed: u64,
) -> Result<Vec<TraceRecord>, WorkloadError> {
    let p = params;
    if !(0.0..=1.0).contains(&p.hot_fraction) {
        return Err(WorkloadError::Param(
            "hot_fraction must lie in [0, 1]".into(),
        ));
    }
    if !(0.0..=1.0).contains(&p.read_fraction) {
        return Err(WorkloadError::Param(
            "read_fraction must lie in [0, 1]".into(),
        ));
    }
    let size = u64::from(p.access_size);
    if size == 0 || !size.is_power_of_two() {
        return Err(WorkloadError::Param(
            "access_size must be a power of two".into(),
        ));
    }
    if p.hot_set_bytes < size {
        return Err(WorkloadError::Param(
            "hot_set_bytes must hold at least one access".into(),
        ));
    }
    let hot_slots = p.hot_set_bytes / size;
    let space_slots = (1u64 << ADDRESS_BITS) / size;
    if p.hot_base(p.cores.saturating_sub(1)) + p.hot_set_bytes > 1u64 << ADDRESS_BITS {
        return Err(WorkloadError::Param(
            "hot sets exceed the address space".into(),
        ));
    }

    let mut per_core: Vec<Vec<TraceRecord>> = (0..p.cores)
        .map(|core| {
            let mut rng = component_rng(seed, &format!("trace.core{core}"));
            let base = p.hot_base(core);
            (0..p.length)
                .map(|tick| {
                    let addr = if rng.random_bool(p.hot_fraction) {
                        base + rng.random_range(0..hot_slots) * size
                    } else {
                        rng.random_range(0..space_slots) * size
                    };
                    let op = if rng.random_bool(p.read_fraction) {
                        Op::R
                    } else {
                        Op::W
                    };
                    TraceRecord {
                        tick,
                        core,
                        op,
                        addr,
                        size: p.access_size,
                    }
                })
                .collect()
        })
        .collect();

    // interleave by tick, then core
    let mut out = Vec::with_capacity((p.cores as u64 * p.length) as usize);
    let mut iters: Vec<_> = per_core
        .iter_mut()
        .map(|v| std::mem::take(v).into_iter())
        .collect();
    for _ in 0..p.length {
        for it in iters.iter_mut() {
            out.extend(it.next());
        }
    }
    Ok(out)
}

/// Bernoulli message-injection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageTraffic {
    pub clusters: u32,
    pub cycles: u64,
    /// injection probability per cluster per cycle
    pub rate: f64,
    pub payload: u64,
}

/// Each cluster independently injects with probability `rate` every cycle,
/// to a uniformly chosen other cluster. Sorted by `(tick, src_cluster)`.
pub fn gen_message_traffic(
    params: &MessageTraffic,
    seed: u64,
) -> Result<Vec<MessageRecord>, WorkloadError> {
    let p = params;
    if !(0.0..=1.0).contains(&p.rate) {
        return Err(WorkloadError::Param("rate must lie in [0, 1]".into()));
    }
    if p.payload == 0 {
        return Err(WorkloadError::Param("payload must be positive".into()));
    }
    if p.rate == 0.0 || p.cycles == 0 {
        return Ok(Vec::new());
    }
    if p.clusters < 2 {
        return Err(WorkloadError::Param(
            "message traffic needs at least two clusters".into(),
        ));
    }
    let gaps = Geometric::new(p.rate).map_err(|e| WorkloadError::Param(e.to_string()))?;
    let mut out = Vec::new();
    for src in 0..p.clusters {
        let mut rng = component_rng(seed, &format!("messages.cluster{src}"));
        let mut tick = gaps.sample(&mut rng);
        while tick < p.cycles {
            let mut dst = rng.random_range(0..p.clusters - 1);
            if dst >= src {
                dst += 1;
            }
            out.push(MessageRecord {
                tick,
                src_cluster: src,
                dst_cluster: dst,
                bytes: p.payload,
            });
            tick = tick.saturating_add(1 + gaps.sample(&mut rng));
        }
    }
    out.sort_by_key(|m| (m.tick, m.src_cluster));
    Ok(out)
}
