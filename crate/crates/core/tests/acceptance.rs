//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails or exceeds its time budget.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tiersim::arch::{build_system, preset, LevelConfig, Sharing, SystemSpec, TierKind, TierSpec};
use tiersim::cache::{CacheGeometry, CacheLevel, CoreOp, Lookup, Moesi, Region, Replacement};
use tiersim::engine::component_rng;
use tiersim::interconnect::{mean_hop_count, simulate_messages, Coord, MeshTopology};
use tiersim::memtech::{level_energy, AccessCounters, Endurance, TechnologyParams};
use tiersim::metrics::{strip_timestamp, Meta, Report};
use tiersim::workload::{
    gen_message_traffic, gen_synthetic_trace, MessageTraffic, Op, SyntheticTrace, TraceRecord,
};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn meta() -> Meta {
    Meta {
        timestamp: String::new(),
        tool: "acceptance".into(),
        seed: 0,
        config: serde_json::Value::Null,
    }
}

fn run_report(spec: &SystemSpec, trace: &[TraceRecord], seed: u64) -> Result<Report, String> {
    let mut sys = build_system(spec, seed).map_err(|e| e.to_string())?;
    sys.load_trace(trace).map_err(|e| e.to_string())?;
    sys.run(None).map_err(|e| e.to_string())?;
    Ok(sys.report(meta(), 1000))
}

fn level<'a>(r: &'a Report, name: &str) -> Result<&'a tiersim::metrics::LevelReport, String> {
    r.levels
        .iter()
        .find(|l| l.name == name)
        .ok_or_else(|| format!("no level {name} in report"))
}

fn rec(tick: u64, core: u32, op: Op, addr: u64) -> TraceRecord {
    TraceRecord {
        tick,
        core,
        op,
        addr,
        size: 8,
    }
}

/// One cluster of `cores` cores with a given L1 data geometry and no L2.
fn single_cluster(cores: u32, l1: CacheGeometry) -> SystemSpec {
    let mut spec = preset("fig33").unwrap();
    spec.cluster_grid = [1, 1];
    spec.cores_per_cluster = cores;
    spec.noc = MeshTopology::new([1, 1, 1]);
    spec.l1d = LevelConfig::new(l1, "SRAM");
    spec.l1i = spec.l1d.clone();
    spec
}

// 1 ---------------------------------------------------------------------

fn brute_mean_hops(d: [u32; 3]) -> f64 {
    let nodes: Vec<[i64; 3]> = (0..d[2])
        .flat_map(|z| {
            (0..d[1]).flat_map(move |y| (0..d[0]).map(move |x| [x as i64, y as i64, z as i64]))
        })
        .collect();
    let total: i64 = nodes
        .iter()
        .flat_map(|a| {
            nodes
                .iter()
                .map(move |b| (0..3).map(|i| (a[i] - b[i]).abs()).sum::<i64>())
        })
        .sum();
    total as f64 / (nodes.len() * nodes.len()) as f64
}

fn hop_counts() -> Outcome {
    let flat = mean_hop_count([8, 8, 1]);
    let cube = mean_hop_count([4, 4, 4]);
    let (f, c) = (brute_mean_hops([8, 8, 1]), brute_mean_hops([4, 4, 4]));
    if (*flat.numer(), *flat.denom()) != (21, 4) || (*cube.numer(), *cube.denom()) != (15, 4) {
        return Err(format!("got {flat} and {cube}"));
    }
    if (f - 5.25).abs() > 1e-12 || (c - 3.75).abs() > 1e-12 {
        return Err(format!("enumeration disagrees: {f} {c}"));
    }
    let ratio = f / c;
    if (ratio - 1.4).abs() > 0.001 {
        return Err(format!("ratio {ratio}"));
    }
    Ok(format!("8x8x1 = {flat}, 4x4x4 = {cube}, ratio {ratio:.4}"))
}

// 2 ---------------------------------------------------------------------

/// Closed-form level energy with table midpoints for SRAM.
fn sram_energy(n_read: u64, n_write: u64, idle_ns: f64, cap_mib: f64) -> f64 {
    let (e_read, e_write, standby) = (0.45, 0.75, 1.0);
    n_read as f64 * e_read + n_write as f64 * e_write + idle_ns * standby * cap_mib * 1e-3
}

fn energy_exactness() -> Outcome {
    let params = TechnologyParams {
        name: "X".into(),
        read_latency: 1.0,
        write_set_latency: 1.0,
        write_reset_latency: 1.0,
        read_energy: 0.2,
        write_set_energy: 0.4,
        write_reset_energy: 0.4,
        standby_power_per_mib: 1.0,
        endurance: Endurance::Unlimited,
        norm_density: 1.0,
        non_volatile: false,
    };
    let counters = AccessCounters {
        n_read: 1000,
        n_write: 500,
        busy_time: 0.0,
        idle_time: 1e6,
    };
    let worked = level_energy(&counters, &params, 1.0, 0.5);
    if (worked - 1400.0).abs() > 1e-9 {
        return Err(format!("worked example gave {worked}"));
    }

    // 16 distinct blocks read, read again, then 8 of them written
    let spec = single_cluster(1, CacheGeometry::new(4096, 64, 2));
    let mut trace = Vec::new();
    for pass in 0..2 {
        for b in 0..16 {
            trace.push(rec(trace.len() as u64, 0, Op::R, b * 64 + pass * 8));
        }
    }
    for b in 0..8 {
        trace.push(rec(trace.len() as u64, 0, Op::W, b * 64));
    }
    let r = run_report(&spec, &trace, 3)?;
    let l1d = level(&r, "l1d")?;
    let (n_read, n_write) = (l1d.n_read(), l1d.n_write());
    if (n_read, n_write, l1d.hits, l1d.misses) != (32, 8, 24, 16) {
        return Err(format!(
            "counters r={n_read} w={n_write} hits={} misses={}",
            l1d.hits, l1d.misses
        ));
    }
    let mut worst: f64 = 0.0;
    let mut expected_total = 0.0;
    for l in &r.levels {
        for reg in &l.regions {
            let c = &reg.counters;
            let closed = sram_energy(c.n_read, c.n_write, c.idle_time, reg.capacity_mib);
            worst = worst.max((reg.energy_nj - closed).abs() / closed.abs().max(1e-300));
            expected_total += closed;
        }
    }
    let total_err = (r.total_energy_nj - expected_total).abs() / expected_total;
    if worst > 1e-9 || total_err > 1e-9 {
        return Err(format!("relative error {worst:e} (total {total_err:e})"));
    }
    Ok(format!(
        "1400 nJ example exact; total {:.3} nJ, max rel. error {worst:.1e}",
        r.total_energy_nj
    ))
}

// 3 ---------------------------------------------------------------------

fn moesi_ok(states: &[Moesi]) -> bool {
    let exclusive = states
        .iter()
        .filter(|s| matches!(s, Moesi::M | Moesi::E))
        .count();
    let owned = states.iter().filter(|s| **s == Moesi::O).count();
    let valid = states.iter().filter(|s| **s != Moesi::I).count();
    exclusive <= 1 && owned <= 1 && (exclusive == 0 || valid == 1)
}

fn coherence_case(sharing: Sharing, seed: u64) -> Result<usize, String> {
    let mut spec = single_cluster(4, CacheGeometry::new(512, 64, 2));
    spec.tiers = vec![
        TierSpec {
            kind: TierKind::CoresL1,
            owners: None,
        },
        TierSpec {
            kind: TierKind::L2Unified,
            owners: None,
        },
    ];
    let mut l2 = LevelConfig::new(CacheGeometry::new(2048, 64, 4), "SRAM");
    l2.sharing = sharing;
    spec.l2 = Some(l2);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ticks = [0u64; 4];
    let trace: Vec<TraceRecord> = (0..10_000)
        .map(|_| {
            let core = rng.random_range(0..4u32);
            ticks[core as usize] += rng.random_range(0..4);
            let addr = rng.random_range(0..48u64) * 64 + rng.random_range(0..8u64) * 8;
            let op = if rng.random_bool(0.5) { Op::R } else { Op::W };
            rec(ticks[core as usize], core, op, addr)
        })
        .collect();

    let mut sys = build_system(&spec, seed).map_err(|e| e.to_string())?;
    sys.enable_access_log();
    sys.load_trace(&trace).map_err(|e| e.to_string())?;
    sys.run(None).map_err(|e| e.to_string())?;
    let log = sys.access_log();
    if log.len() != trace.len() {
        return Err(format!(
            "{} of {} accesses performed",
            log.len(),
            trace.len()
        ));
    }

    let mut seen = vec![false; trace.len()];
    let mut last_of_core: HashMap<usize, usize> = HashMap::new();
    let mut mem: HashMap<(u64, u32), u64> = HashMap::new();
    let mut transactions = 0;
    for a in log {
        let r = &trace[a.trace_index];
        if seen[a.trace_index]
            || r.core as usize != a.core
            || r.op != a.op
            || r.addr - r.addr % 64 != a.block_addr
        {
            return Err(format!(
                "log entry for record {} does not match the trace",
                a.trace_index
            ));
        }
        seen[a.trace_index] = true;
        if let Some(prev) = last_of_core.insert(a.core, a.trace_index) {
            if prev > a.trace_index {
                return Err(format!("core {} performed out of program order", a.core));
            }
        }
        let word = ((r.addr % 64) / 8) as u32;
        match a.op {
            Op::W => {
                let v = a.trace_index as u64 + 1;
                if a.values != [v] {
                    return Err(format!("record {} wrote {:?}", a.trace_index, a.values));
                }
                mem.insert((a.block_addr, word), v);
            }
            Op::R => {
                let want = mem.get(&(a.block_addr, word)).copied().unwrap_or(0);
                if a.values != [want] {
                    return Err(format!(
                        "record {} read {:?}, oracle {want}",
                        a.trace_index, a.values
                    ));
                }
            }
        }
        if let Some(states) = &a.bus_states {
            transactions += 1;
            if !moesi_ok(states) {
                return Err(format!(
                    "invariant broken after record {}: {states:?}",
                    a.trace_index
                ));
            }
        }
    }
    Ok(transactions)
}

fn coherence_oracle() -> Outcome {
    let mut total = 0;
    for (sharing, seed) in [(Sharing::Shared, 11), (Sharing::Private, 12)] {
        total += coherence_case(sharing, seed).map_err(|e| format!("{sharing:?}: {e}"))?;
    }
    Ok(format!(
        "2 x 10^4 accesses match the flat memory; invariants held over {total} bus transactions"
    ))
}

// 4 ---------------------------------------------------------------------

fn lru_case(assoc: u32, seed: u64) -> Result<(), String> {
    let geom = CacheGeometry {
        replacement: Replacement::Lru,
        ..CacheGeometry::new(64 * 32 * u64::from(assoc), 64, assoc)
    };
    let sets = geom.sets();
    let sram = tiersim::memtech::catalog_default()["SRAM"].clone();
    let mut cache = CacheLevel::new("lru", geom, vec![sram], 1000, component_rng(seed, "lru"));
    let mut stacks: Vec<Vec<u64>> = vec![Vec::new(); sets as usize];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = 8;
    for i in 0..100_000u64 {
        // mixture of a small hot region and a wide cold one
        let block = if rng.random_bool(0.7) {
            rng.random_range(0..sets * u64::from(assoc) * 3 / 2)
        } else {
            rng.random_range(0..sets * 64)
        };
        let addr = block * 64;
        let stack = &mut stacks[(block % sets) as usize];
        let pos = stack.iter().position(|b| *b == block);
        let oracle_hit = pos.is_some_and(|p| p < assoc as usize);
        if let Some(p) = pos {
            stack.remove(p);
        }
        stack.insert(0, block);
        let hit = match cache.lookup(CoreOp::Read, addr, i) {
            Lookup::Hit { .. } => true,
            Lookup::Miss { .. } => {
                cache.fill(addr, Moesi::E, vec![0; words], 0, false, i);
                false
            }
        };
        if hit != oracle_hit {
            return Err(format!(
                "{assoc}-way, access {i}: cache hit={hit}, stack model hit={oracle_hit}"
            ));
        }
    }
    Ok(())
}

fn lru_oracle() -> Outcome {
    for (assoc, seed) in [(1, 1), (4, 2), (8, 3), (16, 4)] {
        lru_case(assoc, seed)?;
    }
    Ok("1, 4, 8 and 16 ways: 4 x 10^5 accesses in full agreement".into())
}

// 5 ---------------------------------------------------------------------

fn mean_noc_latency(rate: f64, seed: u64) -> Result<f64, String> {
    let topo = MeshTopology::new([8, 8, 1]);
    let traffic = MessageTraffic {
        clusters: 64,
        cycles: 4000,
        rate,
        payload: 512,
    };
    let msgs = gen_message_traffic(&traffic, seed).map_err(|e| e.to_string())?;
    let coord = |c: u32| Coord::new(c % 8, c / 8, 0);
    let specs: Vec<_> = msgs
        .iter()
        .map(|m| (m.tick, coord(m.src_cluster), coord(m.dst_cluster), m.bytes))
        .collect();
    let net = simulate_messages(&topo, 1, &specs, u64::MAX);
    let lat: Vec<u64> = net.latencies().map(|(a, b)| b - a).collect();
    if lat.len() != specs.len() {
        return Err(format!(
            "{} of {} packets delivered",
            lat.len(),
            specs.len()
        ));
    }
    Ok(lat.iter().sum::<u64>() as f64 / lat.len() as f64)
}

fn congestion() -> Outcome {
    let rates = [0.001, 0.002, 0.005, 0.01, 0.02];
    let mut rows = Vec::new();
    for seed in [1, 2, 3] {
        let lat = rates
            .iter()
            .map(|r| mean_noc_latency(*r, seed))
            .collect::<Result<Vec<f64>, _>>()?;
        for w in lat.windows(2) {
            if w[1] < w[0] * 0.95 {
                return Err(format!(
                    "seed {seed}: latency fell from {:.1} to {:.1}",
                    w[0], w[1]
                ));
            }
        }
        if lat[4] < 5.0 * lat[0] {
            return Err(format!(
                "seed {seed}: saturation {:.1} < 5 x {:.1}",
                lat[4], lat[0]
            ));
        }
        rows.push(format!(
            "[{}]",
            lat.iter()
                .map(|l| format!("{l:.0}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    Ok(format!("mean cycles per seed {}", rows.join(" ")))
}

// 6 ---------------------------------------------------------------------

fn endurance() -> Outcome {
    let mut spec = single_cluster(1, CacheGeometry::new(4096, 64, 1));
    spec.tiers = [TierKind::CoresL1, TierKind::L2Unified, TierKind::L3Unified]
        .into_iter()
        .map(|kind| TierSpec { kind, owners: None })
        .collect();
    spec.l2 = Some(LevelConfig::new(CacheGeometry::new(8192, 64, 1), "SRAM"));
    spec.l3 = Some(LevelConfig::new(CacheGeometry::new(65536, 64, 4), "PCRAM"));
    spec.technologies = BTreeMap::from([(
        "PCRAM".to_string(),
        serde_json::json!({ "endurance": 1000 }),
    )]);
    let (a, b) = (0x4000u64, 0x4000u64 + 0x10000);
    let mut trace = Vec::new();
    for round in 0..1500u64 {
        trace.push(rec(2 * round, 0, Op::W, a));
        // maps to the same L1 and L2 set, forcing the dirty block down to L3
        trace.push(rec(2 * round + 1, 0, Op::R, b));
    }
    let r = run_report(&spec, &trace, 5)?;
    let e = &r.endurance;
    let first = e.first_wear.as_ref().ok_or("no wear event")?;
    if e.wear_events != 1
        || e.worn_blocks != 1
        || first.write_ordinal != 1001
        || !first.level.ends_with(".l3")
    {
        return Err(format!(
            "wear_events={} worn_blocks={} first={first:?}",
            e.wear_events, e.worn_blocks
        ));
    }
    Ok(format!(
        "one wear event in {} at write #{}, worn_blocks = 1",
        first.level, first.write_ordinal
    ))
}

// 7 ---------------------------------------------------------------------

fn hot_set_trace(cores: u32, seed: u64) -> Result<Vec<TraceRecord>, String> {
    gen_synthetic_trace(
        &SyntheticTrace {
            cores,
            length: 4000,
            hot_fraction: 0.9,
            hot_set_bytes: 16 * 1024,
            read_fraction: 2.0 / 3.0,
            access_size: 8,
            shared_hot_set: false,
        },
        seed,
    )
    .map_err(|e| e.to_string())
}

fn l2_system(l2: LevelConfig) -> SystemSpec {
    let mut spec = preset("fig34").unwrap();
    spec.l1d = LevelConfig::new(CacheGeometry::new(4096, 64, 2), "SRAM");
    spec.l1i = spec.l1d.clone();
    spec.l2 = Some(l2);
    spec
}

fn hybrid_l2() -> Outcome {
    let geom = CacheGeometry::new(1 << 20, 64, 16);
    let hybrid = LevelConfig::new(
        CacheGeometry {
            regions: vec![
                Region {
                    ways: [0, 4],
                    tech: "SRAM".into(),
                },
                Region {
                    ways: [4, 16],
                    tech: "PCRAM".into(),
                },
            ],
            ..geom.clone()
        },
        "SRAM",
    );
    let pure = LevelConfig::new(geom, "PCRAM");
    let trace = hot_set_trace(8, 7)?;
    let latency = |l2: LevelConfig| -> Result<f64, String> {
        let r = run_report(&l2_system(l2), &trace, 7)?;
        level(&r, "l2")?
            .mean_hit_latency_ps
            .ok_or_else(|| "no L2 hits".to_string())
    };
    let (h, p) = (latency(hybrid)?, latency(pure)?);
    let reduction = 1.0 - h / p;
    if reduction < 0.20 {
        return Err(format!(
            "hybrid {h:.0} ps vs PCRAM {p:.0} ps ({:.1}% lower)",
            reduction * 100.0
        ));
    }
    Ok(format!(
        "mean L2 hit {h:.0} ps vs {p:.0} ps, {:.1}% lower",
        reduction * 100.0
    ))
}

// 8 ---------------------------------------------------------------------

fn shared_vs_private() -> Outcome {
    let trace = hot_set_trace(8, 8)?;
    let per_miss = |sharing: Sharing| -> Result<f64, String> {
        let mut l2 = LevelConfig::new(CacheGeometry::new(256 * 1024, 64, 8), "SRAM");
        l2.sharing = sharing;
        let r = run_report(&l2_system(l2), &trace, 8)?;
        r.interconnect
            .transactions_per_l1_miss
            .ok_or_else(|| "no L1 misses".to_string())
    };
    let (shared, private) = (per_miss(Sharing::Shared)?, per_miss(Sharing::Private)?);
    if shared <= private {
        return Err(format!("shared {shared:.3} <= private {private:.3}"));
    }
    Ok(format!(
        "transactions per L1 miss: shared {shared:.3}, private {private:.3}"
    ))
}

// 9 ---------------------------------------------------------------------

fn determinism() -> Outcome {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/fig33.json");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("report.json");
    let mut reports = Vec::new();
    for i in 0..2 {
        let status = Command::new(env!("CARGO_BIN_EXE_tiersim"))
            .args(["run", "--seed", "7", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run {i} exited with {status}"));
        }
        reports.push(std::fs::read_to_string(&out).map_err(|e| e.to_string())?);
    }
    if !reports[0].contains("\"timestamp\"") {
        return Err("report has no timestamp".into());
    }
    let (a, b) = (strip_timestamp(&reports[0]), strip_timestamp(&reports[1]));
    if a != b {
        return Err("reports differ beyond meta.timestamp".into());
    }
    Ok(format!(
        "two runs identical modulo timestamp ({} bytes)",
        a.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "mean hop counts", Duration::from_secs(1), hop_counts),
        (
            2,
            "level energy exactness",
            Duration::from_secs(5),
            energy_exactness,
        ),
        (
            3,
            "coherence oracle",
            Duration::from_secs(30),
            coherence_oracle,
        ),
        (4, "LRU stack oracle", Duration::from_secs(10), lru_oracle),
        (5, "NoC congestion", Duration::from_secs(60), congestion),
        (6, "endurance", Duration::from_secs(5), endurance),
        (
            7,
            "hybrid L2 hit latency",
            Duration::from_secs(30),
            hybrid_l2,
        ),
        (
            8,
            "shared vs private L2",
            Duration::from_secs(30),
            shared_vs_private,
        ),
        (9, "determinism", Duration::from_secs(10), determinism),
    ];
    let mut failed = 0;
    for (n, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > budget => {
                Err(format!("{detail}; took {took:.2?}, budget {budget:?}"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS in {took:.2?}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL in {took:.2?}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
