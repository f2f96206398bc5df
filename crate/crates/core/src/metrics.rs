//! Latency statistics, energy aggregation, power density and the JSON run
//! report.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::WearEvent;
use crate::engine::Ps;
use crate::interconnect::NocCounters;
use crate::memtech::{level_energy, AccessCounters, Catalog};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{0} must be positive")]
    Domain(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Latency statistics of one traffic class. Empty sample sets leave every
/// statistic absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p95: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<u64>,
    pub bucket_width: u64,
    /// `[bucket lower bound, count]` for non-empty buckets, ascending.
    pub histogram: Vec<[u64; 2]>,
}

/// Mean, nearest-rank 95th percentile, maximum and a sparse histogram.
pub fn summarize_latency(samples: &[u64], bucket_width: u64) -> LatencySummary {
    let bucket_width = bucket_width.max(1);
    let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
    for s in samples {
        *histogram
            .entry(s / bucket_width * bucket_width)
            .or_default() += 1;
    }
    let histogram = histogram.into_iter().map(|(k, v)| [k, v]).collect();
    if samples.is_empty() {
        return LatencySummary {
            count: 0,
            mean: None,
            p95: None,
            max: None,
            bucket_width,
            histogram,
        };
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    // ceil(0.95 n) in integers
    let rank = (95 * n).div_ceil(100).max(1);
    let sum: u128 = sorted.iter().map(|s| u128::from(*s)).sum();
    LatencySummary {
        count: n as u64,
        mean: Some(sum as f64 / n as f64),
        p95: Some(sorted[rank - 1]),
        max: sorted.last().copied(),
        bucket_width,
        histogram,
    }
}

/// Power density in mW per SRAM-equivalent MiB of area.
pub fn tier_power_density(
    energy_nj: f64,
    duration_ns: f64,
    area: f64,
) -> Result<f64, MetricsError> {
    if duration_ns.is_nan() || duration_ns <= 0.0 {
        return Err(MetricsError::Domain("duration"));
    }
    if area.is_nan() || area <= 0.0 {
        return Err(MetricsError::Domain("area"));
    }
    // nJ/ns is W
    Ok(energy_nj / duration_ns * 1e3 / area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub timestamp: String,
    pub tool: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Meta {
    pub fn now(seed: u64, config: serde_json::Value) -> Self {
        Meta {
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tool: concat!("tiersim ", env!("CARGO_PKG_VERSION")).to_string(),
            seed,
            config,
        }
    }
}

/// One technology region of a level, summed over all instances of the level.
/// `busy_time + idle_time = instances * duration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub tech: String,
    /// per instance
    pub capacity_mib: f64,
    pub counters: AccessCounters,
    pub energy_nj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub name: String,
    pub instances: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub writebacks: u64,
    pub fills: u64,
    pub demotions: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_hit_latency_ps: Option<f64>,
    pub regions: Vec<RegionReport>,
    pub energy_nj: f64,
}

impl LevelReport {
    pub fn n_read(&self) -> u64 {
        self.regions.iter().map(|r| r.counters.n_read).sum()
    }

    pub fn n_write(&self) -> u64 {
        self.regions.iter().map(|r| r.counters.n_write).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BusReport {
    pub transactions: u64,
    pub writebacks: u64,
    pub request_busy_cycles: u64,
    pub response_busy_cycles: u64,
    pub snoop_busy_cycles: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NocReport {
    pub injected: u64,
    pub delivered: u64,
    pub in_flight: u64,
}

impl From<NocCounters> for NocReport {
    fn from(c: NocCounters) -> Self {
        NocReport {
            injected: c.injected,
            delivered: c.delivered,
            in_flight: c.in_flight,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterconnectReport {
    /// L1 data-cache misses across all cores.
    pub l1_misses: u64,
    /// Bus transactions summed over all cluster buses.
    pub bus: BusReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transactions_per_l1_miss: Option<f64>,
    pub noc: NocReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnduranceReport {
    pub max_write_count: u64,
    pub worn_blocks: u64,
    pub wear_events: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_wear: Option<FirstWear>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstWear {
    pub level: String,
    pub time_ps: Ps,
    pub block_addr: String,
    pub write_ordinal: u64,
}

impl FirstWear {
    pub fn new(level: &str, ev: &WearEvent) -> Self {
        FirstWear {
            level: level.to_string(),
            time_ps: ev.time_ps,
            block_addr: format!("{:#x}", ev.block_addr),
            write_ordinal: ev.write_ordinal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub index: usize,
    pub kind: String,
    pub components: Vec<String>,
    pub area: f64,
    pub energy_nj: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_density_mw_per_unit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    pub duration_ps: Ps,
    pub write_mix: f64,
    pub levels: Vec<LevelReport>,
    pub total_energy_nj: f64,
    pub latency: BTreeMap<String, LatencySummary>,
    pub interconnect: InterconnectReport,
    pub endurance: EnduranceReport,
    pub tiers: Vec<TierReport>,
    pub notes: Vec<String>,
}

impl Report {
    /// Internal consistency checks; returns every failed one.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let sum: f64 = self.levels.iter().map(|l| l.energy_nj).sum();
        if !close(sum, self.total_energy_nj) {
            out.push(format!(
                "total energy {} != level sum {sum}",
                self.total_energy_nj
            ));
        }
        let total_ns = self.duration_ps as f64 / 1e3;
        for l in &self.levels {
            if l.hits + l.misses != l.n_read() + l.n_write() {
                out.push(format!("{}: hits + misses != n_read + n_write", l.name));
            }
            if l.evictions > l.fills {
                out.push(format!("{}: evictions exceed fills", l.name));
            }
            let rsum: f64 = l.regions.iter().map(|r| r.energy_nj).sum();
            if !close(rsum, l.energy_nj) {
                out.push(format!("{}: energy != region sum", l.name));
            }
            for r in &l.regions {
                let t = r.counters.busy_time + r.counters.idle_time;
                if !close(t, total_ns * l.instances as f64) {
                    out.push(format!("{}/{}: busy + idle != duration", l.name, r.tech));
                }
            }
        }
        let n = &self.interconnect.noc;
        if n.injected != n.delivered + n.in_flight {
            out.push("noc: injected != delivered + in_flight".into());
        }
        out
    }

    /// Recomputes every level's energy from the report's counters and the
    /// given technology parameters.
    pub fn recompute_total_energy(&self, catalog: &Catalog) -> Option<f64> {
        let mut total = 0.0;
        for l in &self.levels {
            for r in &l.regions {
                let tech = catalog.get(&r.tech)?;
                total += level_energy(&r.counters, tech, r.capacity_mib, self.write_mix);
            }
        }
        Some(total)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12)
}

pub fn report_to_string(report: &Report) -> Result<String, MetricsError> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn emit_report(report: &Report, path: &Path) -> Result<(), MetricsError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, report_to_string(report)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencySample {
    pub class: String,
    pub t_inject: Ps,
    pub t_complete: Ps,
}

/// Writes `class,t_inject_ps,t_complete_ps` rows.
pub fn write_latency_csv(samples: &[LatencySample], path: &Path) -> Result<(), MetricsError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "class,t_inject_ps,t_complete_ps")?;
    for s in samples {
        writeln!(f, "{},{},{}", s.class, s.t_inject, s.t_complete)?;
    }
    f.flush()?;
    Ok(())
}

/// Drops the `meta.timestamp` line so two reports can be compared.
pub fn strip_timestamp(report_json: &str) -> String {
    report_json
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\":"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn latency_examples() {
        let s = summarize_latency(&[10, 20, 30], 10);
        assert_eq!((s.mean, s.max), (Some(20.0), Some(30)));
        assert_eq!(s.histogram, vec![[10, 1], [20, 1], [30, 1]]);

        let v: Vec<u64> = (1..=20).collect();
        assert_eq!(summarize_latency(&v, 5).p95, Some(19));

        let one = summarize_latency(&[42], 1);
        assert_eq!(
            (one.mean, one.p95, one.max),
            (Some(42.0), Some(42), Some(42))
        );
    }

    #[test]
    fn empty_latency_is_absent() {
        let s = summarize_latency(&[], 100);
        assert_eq!((s.count, s.mean, s.p95, s.max), (0, None, None, None));
        let json = serde_json::to_value(&s).unwrap();
        assert!(json.get("mean").is_none());
        assert!(json.get("p95").is_none());
    }

    #[test]
    fn power_density_examples() {
        assert!((tier_power_density(1000.0, 1e6, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(tier_power_density(0.0, 1e6, 2.0).unwrap(), 0.0);
        let a = tier_power_density(300.0, 1e3, 1.5).unwrap();
        let b = tier_power_density(300.0, 1e3, 3.0).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-12);
        assert!(tier_power_density(1.0, 0.0, 1.0).is_err());
        assert!(tier_power_density(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn latency_csv_dump() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lat.csv");
        let samples = vec![LatencySample {
            class: "noc".into(),
            t_inject: 5,
            t_complete: 9,
        }];
        write_latency_csv(&samples, &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(path).unwrap(),
            "class,t_inject_ps,t_complete_ps\nnoc,5,9\n"
        );
    }

    proptest! {
        #[test]
        fn p95_is_nearest_rank(mut v in proptest::collection::vec(0u64..1000, 1..200)) {
            let s = summarize_latency(&v, 7);
            v.sort_unstable();
            let n = v.len();
            let rank = (0.95 * n as f64).ceil() as usize;
            prop_assert_eq!(s.p95, Some(v[rank - 1]));
            let below = v.iter().filter(|x| **x <= s.p95.unwrap()).count();
            prop_assert!(below as f64 >= 0.95 * n as f64);
            let total: u64 = s.histogram.iter().map(|b| b[1]).sum();
            prop_assert_eq!(total, n as u64);
        }
    }
}
