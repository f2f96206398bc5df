use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cache::CacheGeometry;
use crate::interconnect::{BusConfig, MeshTopology};
use crate::memtech::{apply_overrides, catalog_default, Catalog, TechError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TierKind {
    CoresL1,
    L2SplitId,
    L2Unified,
    L3Unified,
    Memory,
}

impl TierKind {
    pub fn name(self) -> &'static str {
        match self {
            TierKind::CoresL1 => "cores_l1",
            TierKind::L2SplitId => "l2_split_id",
            TierKind::L2Unified => "l2_unified",
            TierKind::L3Unified => "l3_unified",
            TierKind::Memory => "memory",
        }
    }

    pub fn is_l2(self) -> bool {
        matches!(self, TierKind::L2SplitId | TierKind::L2Unified)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierSpec {
    pub kind: TierKind,
    /// Clusters served by this tier; derived from adjacent tiers when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owners: Option<Vec<u32>>,
}

impl TierSpec {
    pub fn new(kind: TierKind) -> Self {
        TierSpec { kind, owners: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    /// One instance per cluster behind the bus.
    #[default]
    Shared,
    /// One instance per core in front of the bus.
    Private,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    #[serde(flatten)]
    pub geometry: CacheGeometry,
    /// Technology of the whole level, or of ways not covered by `regions`.
    pub tech: String,
    #[serde(default)]
    pub sharing: Sharing,
}

impl LevelConfig {
    pub fn new(geometry: CacheGeometry, tech: &str) -> Self {
        LevelConfig {
            geometry,
            tech: tech.to_string(),
            sharing: Sharing::Shared,
        }
    }

    /// Technology name of each region in way order.
    pub fn region_techs(&self) -> Vec<String> {
        self.geometry
            .region_ways()
            .into_iter()
            .map(|(_, t)| t.unwrap_or(&self.tech).to_string())
            .collect()
    }
}

fn ps_1000() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clocks {
    #[serde(default = "ps_1000")]
    pub core_ps: u64,
    #[serde(default = "ps_1000")]
    pub bus_ps: u64,
    #[serde(default = "ps_1000")]
    pub noc_ps: u64,
}

impl Default for Clocks {
    fn default() -> Self {
        Clocks {
            core_ps: 1000,
            bus_ps: 1000,
            noc_ps: 1000,
        }
    }
}

fn eight() -> u32 {
    8
}

fn fifty() -> f64 {
    50.0
}

fn half() -> f64 {
    0.5
}

/// Complete architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(default)]
    pub name: String,
    pub cluster_grid: [u32; 2],
    #[serde(default = "eight")]
    pub cores_per_cluster: u32,
    pub tiers: Vec<TierSpec>,
    pub noc: MeshTopology,
    #[serde(default)]
    pub bus: BusConfig,
    pub l1i: LevelConfig,
    pub l1d: LevelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<LevelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l3: Option<LevelConfig>,
    /// ns per cluster-local memory controller access
    #[serde(default = "fifty")]
    pub memory_latency_ns: f64,
    #[serde(default)]
    pub clocks: Clocks,
    /// Partial overrides of catalog entries, keyed by technology name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub technologies: BTreeMap<String, serde_json::Value>,
    /// Fraction of written bits that are set operations.
    #[serde(default = "half")]
    pub write_mix: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn v(path: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation {
        path: path.into(),
        message: message.into(),
    }
}

/// Which tier holds each cluster's instance of a component class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Placement {
    /// cores tier of each cluster
    pub cores: Vec<usize>,
    pub l2: Vec<Option<usize>>,
    pub l3: Vec<Option<usize>>,
    pub memory: Vec<Option<usize>>,
}

impl SystemSpec {
    pub fn core_tiers(&self) -> Vec<usize> {
        self.tiers
            .iter()
            .enumerate()
            .filter(|(_, t)| t.kind == TierKind::CoresL1)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn clusters_per_tier(&self) -> u32 {
        self.cluster_grid[0] * self.cluster_grid[1]
    }

    pub fn clusters(&self) -> u32 {
        self.clusters_per_tier() * self.core_tiers().len() as u32
    }

    pub fn total_cores(&self) -> u32 {
        self.clusters() * self.cores_per_cluster
    }

    pub fn catalog(&self) -> Result<Catalog, TechError> {
        apply_overrides(&catalog_default(), &self.technologies)
    }

    /// Cache levels present, by configuration key.
    pub fn levels(&self) -> Vec<(&'static str, &LevelConfig)> {
        let mut out = vec![("l1i", &self.l1i), ("l1d", &self.l1d)];
        if let Some(l2) = &self.l2 {
            out.push(("l2", l2));
        }
        if let Some(l3) = &self.l3 {
            out.push(("l3", l3));
        }
        out
    }

    pub fn l2_split(&self) -> bool {
        self.tiers.iter().any(|t| t.kind == TierKind::L2SplitId)
    }

    /// Owner clusters of every tier, explicit or derived from adjacency.
    pub fn tier_owners(&self) -> Vec<BTreeSet<u32>> {
        let per = self.clusters_per_tier();
        let mut owners: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); self.tiers.len()];
        let mut ct = 0;
        for (i, t) in self.tiers.iter().enumerate() {
            if t.kind == TierKind::CoresL1 {
                owners[i] = (ct * per..(ct + 1) * per).collect();
                ct += 1;
            }
        }
        let neighbours = |i: usize| {
            [i.checked_sub(1), Some(i + 1)]
                .into_iter()
                .flatten()
                .filter(|j| *j < self.tiers.len())
        };
        for (i, t) in self.tiers.iter().enumerate() {
            if t.kind.is_l2() {
                owners[i] = match &t.owners {
                    Some(o) => o.iter().copied().collect(),
                    None => neighbours(i)
                        .filter(|j| self.tiers[*j].kind == TierKind::CoresL1)
                        .flat_map(|j| owners[j].clone())
                        .collect(),
                };
            }
        }
        for (i, t) in self.tiers.iter().enumerate() {
            if t.kind == TierKind::L3Unified {
                owners[i] = match &t.owners {
                    Some(o) => o.iter().copied().collect(),
                    None => neighbours(i)
                        .filter(|j| self.tiers[*j].kind.is_l2())
                        .flat_map(|j| owners[j].clone())
                        .collect(),
                };
            }
        }
        let all: BTreeSet<u32> = (0..self.clusters()).collect();
        for (i, t) in self.tiers.iter().enumerate() {
            if t.kind == TierKind::Memory {
                owners[i] = match &t.owners {
                    Some(o) => o.iter().copied().collect(),
                    None => all.clone(),
                };
            }
        }
        owners
    }

    /// Tier of every cluster's components. Components without a dedicated
    /// tier live in the cluster's cores tier; memory without a tier is
    /// off-stack (`None`).
    pub fn placement(&self) -> Placement {
        let owners = self.tier_owners();
        let clusters = self.clusters() as usize;
        let mut p = Placement {
            cores: vec![0; clusters],
            l2: vec![None; clusters],
            l3: vec![None; clusters],
            memory: vec![None; clusters],
        };
        for (i, t) in self.tiers.iter().enumerate() {
            for c in owners[i]
                .iter()
                .map(|c| *c as usize)
                .filter(|c| *c < clusters)
            {
                match t.kind {
                    TierKind::CoresL1 => p.cores[c] = i,
                    TierKind::L2SplitId | TierKind::L2Unified => p.l2[c] = p.l2[c].or(Some(i)),
                    TierKind::L3Unified => p.l3[c] = p.l3[c].or(Some(i)),
                    TierKind::Memory => p.memory[c] = p.memory[c].or(Some(i)),
                }
            }
        }
        let has_l2_tier = p.l2.iter().any(Option::is_some);
        let has_l3_tier = p.l3.iter().any(Option::is_some);
        for c in 0..clusters {
            if self.l2.is_some() && !has_l2_tier {
                p.l2[c] = Some(p.cores[c]);
            }
            if self.l3.is_some() && !has_l3_tier {
                p.l3[c] = Some(p.cores[c]);
            }
        }
        p
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.cores_per_cluster > 8 {
            w.push(format!(
                "cores_per_cluster = {} exceeds the usual cluster size of 8",
                self.cores_per_cluster
            ));
        }
        w
    }
}

/// Label, membership test and whether the level is configured.
type TierClass = (&'static str, fn(TierKind) -> bool, bool);

/// Every violated constraint of `spec`, each with a location path. Empty
/// means the spec can be built.
pub fn validate_spec(spec: &SystemSpec) -> Vec<Violation> {
    let mut out = Vec::new();

    let catalog = match spec.catalog() {
        Ok(c) => Some(c),
        Err(e) => {
            out.push(v("system.technologies", e.to_string()));
            None
        }
    };

    if spec.cluster_grid.contains(&0) {
        out.push(v(
            "system.cluster_grid",
            "cluster grid dimensions must be at least 1",
        ));
    }
    if spec.cores_per_cluster == 0 {
        out.push(v(
            "system.cores_per_cluster",
            "a cluster needs at least one core",
        ));
    }
    if !(spec.memory_latency_ns > 0.0 && spec.memory_latency_ns.is_finite()) {
        out.push(v(
            "system.memory_latency_ns",
            "memory latency must be positive",
        ));
    }
    if !(0.0..=1.0).contains(&spec.write_mix) {
        out.push(v("system.write_mix", "write_mix must lie in [0, 1]"));
    }
    for (name, ps) in [
        ("core_ps", spec.clocks.core_ps),
        ("bus_ps", spec.clocks.bus_ps),
        ("noc_ps", spec.clocks.noc_ps),
    ] {
        if ps == 0 {
            out.push(v(
                format!("system.clocks.{name}"),
                "clock period must be positive",
            ));
        }
    }
    if spec.bus.beat_width == 0 {
        out.push(v("system.bus.beat_width", "beat width must be positive"));
    }

    let mut block_sizes = BTreeSet::new();
    for (key, level) in spec.levels() {
        let path = format!("system.{key}");
        let g = &level.geometry;
        for msg in g.violations() {
            out.push(v(&path, msg));
        }
        if g.block_size.is_power_of_two() && g.block_size >= 8 {
            block_sizes.insert(g.block_size);
        }
        if let Some(catalog) = &catalog {
            for tech in level
                .region_techs()
                .iter()
                .chain(std::iter::once(&level.tech))
            {
                if !catalog.contains_key(tech) {
                    out.push(v(
                        format!("{path}.tech"),
                        format!("unknown technology `{tech}`"),
                    ));
                }
            }
        }
        if key != "l2" && level.sharing != Sharing::Shared {
            out.push(v(
                format!("{path}.sharing"),
                "only the L2 level can be private",
            ));
        }
    }
    if block_sizes.len() > 1 {
        out.push(v(
            "system",
            format!("all cache levels must share one block size, found {block_sizes:?}"),
        ));
    }

    for msg in spec.noc.violations() {
        out.push(v("system.noc", msg));
    }

    validate_tiers(spec, &mut out);
    out
}

fn validate_tiers(spec: &SystemSpec, out: &mut Vec<Violation>) {
    let tiers = &spec.tiers;
    let core_tiers = spec.core_tiers();
    if core_tiers.is_empty() {
        out.push(v(
            "system.tiers",
            "the stack needs at least one cores_l1 tier",
        ));
        return;
    }
    let expected = [
        spec.cluster_grid[0],
        spec.cluster_grid[1],
        core_tiers.len() as u32,
    ];
    if spec.noc.dims != expected {
        out.push(v(
            "system.noc.dims",
            format!(
                "mesh dimensions {:?} must equal cluster grid x cores tiers {:?}",
                spec.noc.dims, expected
            ),
        ));
    }

    let adjacent = |i: usize, pred: &dyn Fn(TierKind) -> bool| {
        (i > 0 && pred(tiers[i - 1].kind)) || (i + 1 < tiers.len() && pred(tiers[i + 1].kind))
    };
    let clusters = spec.clusters();
    for (i, t) in tiers.iter().enumerate() {
        let path = format!("system.tiers[{i}]");
        match t.kind {
            TierKind::L2SplitId | TierKind::L2Unified => {
                if spec.l2.is_none() {
                    out.push(v(
                        &path,
                        format!("{} tier without an l2 level", t.kind.name()),
                    ));
                }
                if !adjacent(i, &|k| k == TierKind::CoresL1) {
                    out.push(v(&path, "L2 tier is not adjacent to a cores tier"));
                }
            }
            TierKind::L3Unified => {
                if spec.l3.is_none() {
                    out.push(v(&path, "l3_unified tier without an l3 level"));
                }
                if !adjacent(i, &|k| k.is_l2()) {
                    out.push(v(&path, "L3 tier is not adjacent to an L2 tier"));
                }
            }
            TierKind::CoresL1 | TierKind::Memory => {}
        }
        if let Some(owners) = &t.owners {
            if t.kind == TierKind::CoresL1 {
                out.push(v(
                    format!("{path}.owners"),
                    "cores tiers own their clusters implicitly",
                ));
            }
            if let Some(bad) = owners.iter().find(|c| **c >= clusters) {
                out.push(v(
                    format!("{path}.owners"),
                    format!("cluster {bad} does not exist"),
                ));
            }
        }
    }
    let kinds: BTreeSet<TierKind> = tiers.iter().map(|t| t.kind).collect();
    if kinds.contains(&TierKind::L2SplitId) && kinds.contains(&TierKind::L2Unified) {
        out.push(v(
            "system.tiers",
            "L2 tiers must be all split or all unified",
        ));
    }

    // every cluster: at most one instance per class, and full coverage of
    // any class that has tiers
    let owners = spec.tier_owners();
    let classes: [TierClass; 3] = [
        ("L2", TierKind::is_l2, spec.l2.is_some()),
        ("L3", |k| k == TierKind::L3Unified, spec.l3.is_some()),
        ("memory controller", |k| k == TierKind::Memory, true),
    ];
    for (label, pred, configured) in classes {
        let class_tiers: Vec<usize> = (0..tiers.len()).filter(|i| pred(tiers[*i].kind)).collect();
        if class_tiers.is_empty() || !configured {
            continue;
        }
        for c in 0..clusters {
            let n = class_tiers
                .iter()
                .filter(|i| owners[**i].contains(&c))
                .count();
            if n != 1 {
                out.push(v(
                    "system.tiers",
                    format!("cluster {c} is served by {n} {label} tiers, expected exactly one"),
                ));
            }
        }
    }
}

fn l1() -> LevelConfig {
    LevelConfig::new(CacheGeometry::new(32 * 1024, 64, 2), "SRAM")
}

fn shared_l2() -> LevelConfig {
    let mut g = CacheGeometry::new(1024 * 1024, 64, 16);
    g.replacement = crate::cache::Replacement::PseudoRandom;
    LevelConfig::new(g, "SRAM")
}

fn base(name: &str, grid: [u32; 2], tiers: &[TierKind], noc_z: u32) -> SystemSpec {
    SystemSpec {
        name: name.to_string(),
        cluster_grid: grid,
        cores_per_cluster: 8,
        tiers: tiers.iter().map(|k| TierSpec::new(*k)).collect(),
        noc: MeshTopology::new([grid[0], grid[1], noc_z]),
        bus: BusConfig::default(),
        l1i: l1(),
        l1d: l1(),
        l2: None,
        l3: None,
        memory_latency_ns: 50.0,
        clocks: Clocks::default(),
        technologies: BTreeMap::new(),
        write_mix: 0.5,
    }
}

pub const PRESETS: [&str; 6] = ["fig32", "fig33", "fig34", "fig35a", "fig35b", "fig36"];

/// Named architectures mirroring the reference tier stacks.
pub fn preset(name: &str) -> Option<SystemSpec> {
    use TierKind::*;
    let spec = match name {
        "fig32" => SystemSpec {
            l2: Some(shared_l2()),
            ..base(name, [1, 1], &[CoresL1], 1)
        },
        "fig33" => base(name, [2, 2], &[CoresL1], 1),
        "fig34" => SystemSpec {
            l2: Some(shared_l2()),
            ..base(name, [2, 2], &[CoresL1, L2Unified], 1)
        },
        "fig35a" => SystemSpec {
            l2: Some(shared_l2()),
            ..base(name, [2, 2], &[CoresL1, L2SplitId], 1)
        },
        "fig35b" => SystemSpec {
            l2: Some(shared_l2()),
            l3: Some(LevelConfig::new(
                CacheGeometry::new(4 * 1024 * 1024, 64, 16),
                "MRAM",
            )),
            ..base(name, [2, 2], &[CoresL1, L2SplitId, L3Unified], 1)
        },
        "fig36" => SystemSpec {
            l2: Some(shared_l2()),
            l3: Some(LevelConfig::new(
                CacheGeometry::new(4 * 1024 * 1024, 64, 16),
                "MRAM",
            )),
            ..base(
                name,
                [2, 2],
                &[CoresL1, L2SplitId, L3Unified, L2SplitId, CoresL1],
                2,
            )
        },
        _ => return None,
    };
    Some(spec)
}
