//! Built, simulatable instance of a [`SystemSpec`].
//!
//! Every cluster is a UMA domain: per-core L1 (and optionally private L2)
//! caches kept coherent with MOESI over a three-channel snooping bus, then
//! an optional shared L2, an optional L3 and one memory controller. Clusters
//! share no addresses; they talk only through messages on the mesh.
//!
//! A bus transaction takes effect atomically when the bus grants it, so the
//! grant order is the serialization order of all coherent accesses. Cache
//! hits take effect when they issue.

use std::collections::{BTreeMap, HashMap, VecDeque};

use thiserror::Error;

use super::spec::{validate_spec, Sharing, SystemSpec, Violation};
use crate::cache::{
    check_invariants, coherence_step, word_mask, BusAction, CacheLevel, CoherenceEvent,
    CoherenceFault, CoreOp, DataSource, EvictCause, Evicted, Lookup, Moesi,
};
use crate::engine::{component_rng, cycles_for_latency, EngineError, EventQueue, Ps};
use crate::interconnect::{ChannelKind, ClusterBus, Coord, MeshNetwork, NocEvent, PacketKind};
use crate::memtech::{area_estimate, level_energy, AccessCounters, Catalog, TechnologyParams};
use crate::metrics::{
    summarize_latency, tier_power_density, BusReport, EnduranceReport, FirstWear,
    InterconnectReport, LatencySample, LevelReport, Meta, NocReport, RegionReport, Report,
    TierReport,
};
use crate::workload::{MessageRecord, Op, TraceRecord};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid system ({count} violations), first: {first}")]
    Invalid { first: Violation, count: usize },
    #[error("technology catalog: {0}")]
    Catalog(String),
    #[error("workload: {0}")]
    Workload(String),
    #[error("data paths cross cluster boundaries: {0}")]
    Norma(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("at {time} ps: {fault}")]
    Coherence { time: Ps, fault: CoherenceFault },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One access as it took effect, in serialization order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerformedAccess {
    pub core: usize,
    pub cluster: usize,
    pub op: Op,
    pub block_addr: u64,
    pub mask: u64,
    /// Written value, or the values read from each word of `mask`.
    pub values: Vec<u64>,
    /// Position of the access in the loaded trace.
    pub trace_index: usize,
    /// Per-node states of the block right after its bus transaction, or
    /// `None` for accesses completed without the bus.
    pub bus_states: Option<Vec<Moesi>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemCounts {
    pub clusters: usize,
    pub cores: usize,
    pub buses: usize,
    pub memory_controllers: usize,
    pub noc_nodes: usize,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Issue(usize),
    BusRequest(usize),
    BusGrant(usize),
    Noc(NocEvent),
}

struct Node {
    l1i: CacheLevel,
    l1d: CacheLevel,
    l2: Option<CacheLevel>,
    l2i: Option<CacheLevel>,
}

struct MemoryController {
    latency: Ps,
    free_at: Ps,
    store: HashMap<u64, Vec<u64>>,
    reads: u64,
    writes: u64,
}

struct Cluster {
    nodes: Vec<Node>,
    bus: ClusterBus,
    /// Memory-side caches nearest first: shared L2 data, then L3.
    mem_side: Vec<CacheLevel>,
    l2i: Option<CacheLevel>,
    mc: MemoryController,
    words: usize,
    block_size: u64,
    writebacks: u64,
}

fn full_mask(words: usize) -> u64 {
    if words >= 64 {
        u64::MAX
    } else {
        (1u64 << words) - 1
    }
}

fn words_of(data: &[u64], mask: u64) -> Vec<u64> {
    (0..data.len())
        .filter(|w| mask & (1 << w) != 0)
        .map(|w| data[w])
        .collect()
}

fn op_of(op: Op) -> CoreOp {
    match op {
        Op::R => CoreOp::Read,
        Op::W => CoreOp::Write,
    }
}

impl Cluster {
    fn node_state(&self, n: usize, addr: u64) -> Moesi {
        let node = &self.nodes[n];
        if let Some(i) = node.l1d.probe(addr) {
            return node.l1d.line(i).state;
        }
        node.l2
            .as_ref()
            .and_then(|l2| l2.probe(addr).map(|i| l2.line(i).state))
            .unwrap_or(Moesi::I)
    }

    fn states(&self, addr: u64) -> Vec<Moesi> {
        (0..self.nodes.len())
            .map(|n| self.node_state(n, addr))
            .collect()
    }

    /// Freshest copy held by a node and the union of its dirty masks.
    fn node_data(&self, n: usize, addr: u64) -> Option<(Vec<u64>, u64)> {
        let node = &self.nodes[n];
        let l2 = node
            .l2
            .as_ref()
            .and_then(|l2| l2.probe(addr).map(|i| l2.line(i)));
        let l1 = node.l1d.probe(addr).map(|i| node.l1d.line(i));
        let mask = l1.map_or(0, |l| l.dirty_word_mask) | l2.map_or(0, |l| l.dirty_word_mask);
        l1.or(l2).map(|l| (l.data.clone(), mask))
    }

    fn supply_latency(&self, n: usize, addr: u64) -> Ps {
        let node = &self.nodes[n];
        if let Some(i) = node.l1d.probe(addr) {
            return node.l1d.hit_latency(i, CoreOp::Read);
        }
        node.l2
            .as_ref()
            .and_then(|l2| l2.probe(addr).map(|i| l2.hit_latency(i, CoreOp::Read)))
            .unwrap_or(0)
    }

    fn set_node_state(&mut self, n: usize, addr: u64, state: Moesi) {
        let node = &mut self.nodes[n];
        if state == Moesi::I {
            if let Some(i) = node.l1d.probe(addr) {
                node.l1d.invalidate(i);
            }
            if let Some(l2) = node.l2.as_mut() {
                if let Some(i) = l2.probe(addr) {
                    l2.invalidate(i);
                }
            }
            return;
        }
        if let Some(i) = node.l1d.probe(addr) {
            node.l1d.set_state(i, state);
        }
        if let Some(l2) = node.l2.as_mut() {
            if let Some(i) = l2.probe(addr) {
                l2.set_state(i, state);
            }
        }
    }

    /// Lines pushed out of a node's L1.
    fn l1_victims(
        &mut self,
        n: usize,
        evicted: Vec<Evicted>,
        now: Ps,
    ) -> Result<(), CoherenceFault> {
        for ev in evicted {
            let in_l2 = self.nodes[n]
                .l2
                .as_ref()
                .and_then(|l2| l2.probe(ev.block_addr));
            match in_l2 {
                Some(j) => {
                    if ev.dirty_mask != 0 {
                        let l2 = self.nodes[n].l2.as_mut().expect("probed");
                        if let Some(worn) = l2.store_block(j, &ev.data, ev.dirty_mask, now) {
                            self.node_evict(n, worn, now)?;
                        }
                    }
                }
                None => self.node_evict(n, ev, now)?,
            }
        }
        Ok(())
    }

    /// Lines pushed out of a node's private L2.
    fn l2_victims(
        &mut self,
        n: usize,
        evicted: Vec<Evicted>,
        now: Ps,
    ) -> Result<(), CoherenceFault> {
        for ev in evicted {
            match self.nodes[n].l1d.probe(ev.block_addr) {
                Some(i) => self.nodes[n].l1d.mark_dirty(i, ev.dirty_mask),
                None => self.node_evict(n, ev, now)?,
            }
        }
        Ok(())
    }

    /// The last copy of a block left node `n`.
    fn node_evict(&mut self, n: usize, ev: Evicted, now: Ps) -> Result<(), CoherenceFault> {
        let mut states = self.states(ev.block_addr);
        states[n] = ev.state;
        let out = coherence_step(&states, CoherenceEvent::Evict(n))?;
        if out
            .actions
            .iter()
            .any(|a| matches!(a, BusAction::WriteBack { .. }))
        {
            let mask = if ev.dirty_mask == 0 {
                full_mask(self.words)
            } else {
                ev.dirty_mask
            };
            let (_, end) = self
                .bus
                .reserve(ChannelKind::Request, n, self.block_size, now);
            self.writebacks += 1;
            self.mem_write(0, ev.block_addr, ev.data, mask, end);
        }
        check_invariants(&out.states)
    }

    /// Writes a dirty block into the memory side from level `from` down,
    /// allocating on miss.
    fn mem_write(&mut self, from: usize, addr: u64, data: Vec<u64>, mask: u64, t: Ps) {
        let words = self.words;
        let addr = addr - addr % self.block_size;
        let mut work = vec![(from, addr, data, mask)];
        while let Some((k, addr, data, mask)) = work.pop() {
            let mask = if mask == 0 { full_mask(words) } else { mask };
            if k == self.mem_side.len() {
                let mc = &mut self.mc;
                mc.free_at = mc.free_at.max(t) + mc.latency;
                mc.writes += 1;
                mc.store.insert(addr, data);
                continue;
            }
            let level = &mut self.mem_side[k];
            match level.lookup(CoreOp::Write, addr, t) {
                Lookup::Hit { idx, .. } => {
                    level.set_state(idx, Moesi::M);
                    if let Some(worn) = level.store_block(idx, &data, mask, t) {
                        work.push((k + 1, worn.block_addr, worn.data, worn.dirty_mask));
                    }
                }
                Lookup::Miss { .. } => {
                    let fill = level.fill(addr, Moesi::M, data.clone(), mask, true, t);
                    let mut placed_or_pushed = fill.idx.is_some();
                    for ev in fill.evicted {
                        placed_or_pushed |= ev.block_addr == addr;
                        if ev.state.is_owner() {
                            work.push((k + 1, ev.block_addr, ev.data, ev.dirty_mask));
                        }
                    }
                    if !placed_or_pushed {
                        work.push((k + 1, addr, data, mask));
                    }
                }
            }
        }
    }

    /// Reads a block from the memory side; returns it and its ready time.
    fn mem_read(&mut self, addr: u64, t: Ps) -> (Vec<u64>, Ps) {
        let addr = addr - addr % self.block_size;
        let mut now = t;
        let mut missed = Vec::new();
        let mut data = None;
        for k in 0..self.mem_side.len() {
            let level = &mut self.mem_side[k];
            match level.lookup(CoreOp::Read, addr, now) {
                Lookup::Hit { idx, latency } => {
                    data = Some(level.line(idx).data.clone());
                    now += latency;
                    break;
                }
                Lookup::Miss { latency } => {
                    now += latency;
                    missed.push(k);
                }
            }
        }
        let data = match data {
            Some(d) => d,
            None => {
                let mc = &mut self.mc;
                let start = now.max(mc.free_at);
                mc.free_at = start + mc.latency;
                mc.reads += 1;
                now = start + mc.latency;
                mc.store
                    .get(&addr)
                    .cloned()
                    .unwrap_or_else(|| vec![0; self.words])
            }
        };
        for k in missed.into_iter().rev() {
            let fill = self.mem_side[k].fill(addr, Moesi::E, data.clone(), 0, false, t);
            for ev in fill.evicted {
                if ev.state.is_owner() {
                    self.mem_write(k + 1, ev.block_addr, ev.data, ev.dirty_mask, t);
                }
            }
        }
        (data, now)
    }

    /// Writes `value` into the node's freshest copy; returns false if the
    /// node holds none.
    fn store_in_node(
        &mut self,
        n: usize,
        addr: u64,
        mask: u64,
        value: u64,
        now: Ps,
    ) -> Result<bool, CoherenceFault> {
        if let Some(i) = self.nodes[n].l1d.probe(addr) {
            if let Some(worn) = self.nodes[n].l1d.store(i, mask, value, now) {
                self.l1_victims(n, vec![worn], now)?;
            }
            return Ok(true);
        }
        let in_l2 = self.nodes[n].l2.as_ref().and_then(|l2| l2.probe(addr));
        if let Some(j) = in_l2 {
            let l2 = self.nodes[n].l2.as_mut().expect("probed");
            if let Some(worn) = l2.store(j, mask, value, now) {
                self.node_evict(n, worn, now)?;
            }
            return Ok(true);
        }
        Ok(false)
    }

    /// Installs a block in the node's L1 (and private L2 when `with_l2`).
    fn install(
        &mut self,
        n: usize,
        addr: u64,
        state: Moesi,
        data: &[u64],
        with_l2: bool,
        now: Ps,
    ) -> Result<(), CoherenceFault> {
        let fill = self.nodes[n]
            .l1d
            .fill(addr, state, data.to_vec(), 0, false, now);
        self.l1_victims(n, fill.evicted, now)?;
        if with_l2 {
            if let Some(l2) = self.nodes[n].l2.as_mut() {
                let fill = l2.fill(addr, state, data.to_vec(), 0, false, now);
                self.l2_victims(n, fill.evicted, now)?;
            }
        }
        Ok(())
    }

    fn instances(&self) -> impl Iterator<Item = &CacheLevel> {
        self.nodes
            .iter()
            .flat_map(|n| {
                [Some(&n.l1i), Some(&n.l1d), n.l2i.as_ref(), n.l2.as_ref()]
                    .into_iter()
                    .flatten()
            })
            .chain(self.l2i.iter())
            .chain(self.mem_side.iter())
    }
}

struct Pending {
    trace_idx: usize,
    op: Op,
    addr: u64,
    mask: u64,
    issue: Ps,
}

#[derive(Default)]
struct CoreState {
    queue: VecDeque<(usize, TraceRecord)>,
    pending: Option<Pending>,
}

/// Level key of each cache instance name suffix, for report grouping.
const LEVEL_ORDER: [&str; 6] = ["l1i", "l1d", "l2i", "l2d", "l2", "l3"];

pub struct System {
    spec: SystemSpec,
    catalog: Catalog,
    clusters: Vec<Cluster>,
    cores: Vec<CoreState>,
    noc: Option<MeshNetwork>,
    messages: Vec<MessageRecord>,
    queue: EventQueue<Ev>,
    samples: Vec<LatencySample>,
    log: Option<Vec<PerformedAccess>>,
    duration: Ps,
}

/// Validates and instantiates `spec`. Each component draws randomness from
/// its own stream of `seed`.
pub fn build_system(spec: &SystemSpec, seed: u64) -> Result<System, BuildError> {
    let violations = validate_spec(spec);
    if let Some(first) = violations.first() {
        return Err(BuildError::Invalid {
            first: first.clone(),
            count: violations.len(),
        });
    }
    let catalog = spec
        .catalog()
        .map_err(|e| BuildError::Catalog(e.to_string()))?;
    let techs = |cfg: &super::spec::LevelConfig| -> Vec<TechnologyParams> {
        cfg.region_techs()
            .iter()
            .map(|t| catalog[t].clone())
            .collect()
    };
    let split = spec.l2_split();
    let core_clk = spec.clocks.core_ps;
    let bus_clk = spec.clocks.bus_ps;
    let make = |name: String, cfg: &super::spec::LevelConfig, clk: Ps| {
        let rng = component_rng(seed, &name);
        CacheLevel::new(name, cfg.geometry.clone(), techs(cfg), clk, rng)
    };
    let words = spec.l1d.geometry.words_per_block();
    let block_size = spec.l1d.geometry.block_size;
    let mem_latency = cycles_for_latency(spec.memory_latency_ns, bus_clk) * bus_clk;
    let mut clusters = Vec::new();
    for c in 0..spec.clusters() as usize {
        let nodes = (0..spec.cores_per_cluster as usize)
            .map(|n| {
                let base = format!("c{c}.core{n}");
                let private = spec.l2.as_ref().filter(|l2| l2.sharing == Sharing::Private);
                Node {
                    l1i: make(format!("{base}.l1i"), &spec.l1i, core_clk),
                    l1d: make(format!("{base}.l1d"), &spec.l1d, core_clk),
                    l2: private.map(|cfg| {
                        make(
                            format!("{base}.{}", if split { "l2d" } else { "l2" }),
                            cfg,
                            core_clk,
                        )
                    }),
                    l2i: private
                        .filter(|_| split)
                        .map(|cfg| make(format!("{base}.l2i"), cfg, core_clk)),
                }
            })
            .collect();
        let shared = spec.l2.as_ref().filter(|l2| l2.sharing == Sharing::Shared);
        let mut mem_side = Vec::new();
        if let Some(cfg) = shared {
            mem_side.push(make(
                format!("c{c}.{}", if split { "l2d" } else { "l2" }),
                cfg,
                bus_clk,
            ));
        }
        if let Some(cfg) = &spec.l3 {
            mem_side.push(make(format!("c{c}.l3"), cfg, bus_clk));
        }
        clusters.push(Cluster {
            nodes,
            bus: ClusterBus::new(&spec.bus, bus_clk),
            mem_side,
            l2i: shared
                .filter(|_| split)
                .map(|cfg| make(format!("c{c}.l2i"), cfg, bus_clk)),
            mc: MemoryController {
                latency: mem_latency,
                free_at: 0,
                store: HashMap::new(),
                reads: 0,
                writes: 0,
            },
            words,
            block_size,
            writebacks: 0,
        });
    }
    let noc = (spec.clusters() > 1).then(|| MeshNetwork::new(spec.noc.clone(), spec.clocks.noc_ps));
    let system = System {
        spec: spec.clone(),
        catalog,
        cores: (0..spec.total_cores())
            .map(|_| CoreState::default())
            .collect(),
        clusters,
        noc,
        messages: Vec::new(),
        queue: EventQueue::new(),
        samples: Vec::new(),
        log: None,
        duration: 0,
    };
    system.check_norma().map_err(BuildError::Norma)?;
    Ok(system)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl System {
    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn counts(&self) -> SystemCounts {
        SystemCounts {
            clusters: self.clusters.len(),
            cores: self.cores.len(),
            buses: self.clusters.len(),
            memory_controllers: self.clusters.len(),
            noc_nodes: self.noc.as_ref().map_or(0, |n| n.topology().nodes()),
        }
    }

    /// Verifies that the data-path graph splits into one component per
    /// memory controller.
    fn check_norma(&self) -> Result<(), String> {
        // vertices: per cluster a bus, a controller and every cache instance
        let mut parent = Vec::new();
        let mut is_mc = Vec::new();
        let mut add = |mc: bool, parent: &mut Vec<usize>| {
            parent.push(parent.len());
            is_mc.push(mc);
            parent.len() - 1
        };
        let mut edges = Vec::new();
        for cl in &self.clusters {
            let bus = add(false, &mut parent);
            let mc = add(true, &mut parent);
            for node in &cl.nodes {
                let l1 = add(false, &mut parent);
                edges.push((l1, bus));
                let l1i = add(false, &mut parent);
                edges.push((l1i, bus));
                if node.l2.is_some() {
                    let l2 = add(false, &mut parent);
                    edges.push((l1, l2));
                    edges.push((l2, bus));
                }
                if node.l2i.is_some() {
                    let l2i = add(false, &mut parent);
                    edges.push((l1i, l2i));
                    edges.push((l2i, bus));
                }
            }
            if cl.l2i.is_some() {
                let l2i = add(false, &mut parent);
                edges.push((bus, l2i));
                edges.push((l2i, mc));
            }
            let mut prev = bus;
            for _ in &cl.mem_side {
                let lvl = add(false, &mut parent);
                edges.push((prev, lvl));
                prev = lvl;
            }
            edges.push((prev, mc));
        }
        for (a, b) in edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let mut per_root: BTreeMap<usize, usize> = BTreeMap::new();
        for (v, mc) in is_mc.iter().enumerate() {
            let r = find(&mut parent, v);
            *per_root.entry(r).or_default() += usize::from(*mc);
        }
        match per_root.values().find(|n| **n != 1) {
            Some(n) => Err(format!(
                "a data-path component reaches {n} memory controllers"
            )),
            None => Ok(()),
        }
    }

    /// Queues per-core accesses in trace order.
    pub fn load_trace(&mut self, trace: &[TraceRecord]) -> Result<(), BuildError> {
        let block = self.spec.l1d.geometry.block_size;
        for (i, r) in trace.iter().enumerate() {
            let core = r.core as usize;
            if core >= self.cores.len() {
                return Err(BuildError::Workload(format!(
                    "record {}: core {core} does not exist ({} cores)",
                    i + 1,
                    self.cores.len()
                )));
            }
            if r.size == 0 || r.addr % block + u64::from(r.size) > block {
                return Err(BuildError::Workload(format!(
                    "record {}: access of {} bytes at {:#x} crosses a block boundary",
                    i + 1,
                    r.size,
                    r.addr
                )));
            }
            self.cores[core].queue.push_back((i, *r));
        }
        Ok(())
    }

    pub fn load_messages(&mut self, messages: &[MessageRecord]) -> Result<(), BuildError> {
        if messages.is_empty() {
            return Ok(());
        }
        let clusters = self.clusters.len() as u32;
        if clusters < 2 {
            return Err(BuildError::Workload(
                "a single-cluster system has no mesh; message workloads are not allowed".into(),
            ));
        }
        for (i, m) in messages.iter().enumerate() {
            if m.src_cluster >= clusters
                || m.dst_cluster >= clusters
                || m.src_cluster == m.dst_cluster
            {
                return Err(BuildError::Workload(format!(
                    "message {}: bad cluster pair",
                    i + 1
                )));
            }
        }
        self.messages.extend_from_slice(messages);
        Ok(())
    }

    /// Records every performed access for offline checking.
    pub fn enable_access_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn access_log(&self) -> &[PerformedAccess] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn latency_samples(&self) -> &[LatencySample] {
        &self.samples
    }

    fn cluster_coord(&self, c: u32) -> Coord {
        let [x, y] = self.spec.cluster_grid;
        Coord::new(c % x, (c / x) % y, c / (x * y))
    }

    fn schedule(&mut self, t: Ps, target: usize, ev: Ev) -> Result<(), RunError> {
        self.queue.schedule(t, target, ev)?;
        Ok(())
    }

    fn schedule_next_issue(&mut self, core: usize, after: Ps) -> Result<(), RunError> {
        if let Some((_, r)) = self.cores[core].queue.front() {
            let t = after.max(r.tick * self.spec.clocks.core_ps);
            self.schedule(t, core, Ev::Issue(core))?;
        }
        Ok(())
    }

    /// Runs until `t_end` ps, or until no events remain.
    pub fn run(&mut self, t_end: Option<Ps>) -> Result<(), RunError> {
        for core in 0..self.cores.len() {
            self.schedule_next_issue(core, 0)?;
        }
        let msgs = std::mem::take(&mut self.messages);
        for m in &msgs {
            let (src, dst) = (
                self.cluster_coord(m.src_cluster),
                self.cluster_coord(m.dst_cluster),
            );
            let t = m.tick * self.spec.clocks.noc_ps;
            let net = self.noc.as_mut().expect("checked at load");
            let (t, ev) = net.submit(src, dst, PacketKind::Message, m.bytes, t);
            self.schedule(t, usize::MAX, Ev::Noc(ev))?;
        }
        let limit = t_end.unwrap_or(Ps::MAX);
        while let Some(ev) = self.queue.pop_until(limit) {
            let now = ev.time;
            let res = match ev.payload {
                Ev::Issue(core) => self.on_issue(core, now),
                Ev::BusRequest(core) => self.on_bus_request(core, now),
                Ev::BusGrant(core) => self.on_bus_grant(core, now),
                Ev::Noc(e) => {
                    let net = self.noc.as_mut().expect("noc event without mesh");
                    match net.handle(now, e) {
                        Some((t, next)) => self.schedule(t, usize::MAX, Ev::Noc(next)),
                        None => Ok(()),
                    }
                }
            };
            res?;
        }
        self.duration = t_end.unwrap_or(self.queue.now());
        if let Some(net) = &self.noc {
            for (t0, t1) in net.latencies() {
                self.samples.push(LatencySample {
                    class: "noc_message".into(),
                    t_inject: t0,
                    t_complete: t1,
                });
            }
        }
        Ok(())
    }

    fn locate(&self, core: usize) -> (usize, usize) {
        let cpc = self.spec.cores_per_cluster as usize;
        (core / cpc, core % cpc)
    }

    fn log(
        &mut self,
        core: usize,
        cluster: usize,
        access: (usize, Op, u64, u64),
        values: Vec<u64>,
        bus_states: Option<Vec<Moesi>>,
    ) {
        let (trace_index, op, addr, mask) = access;
        if let Some(log) = self.log.as_mut() {
            log.push(PerformedAccess {
                core,
                cluster,
                op,
                block_addr: addr - addr % self.spec.l1d.geometry.block_size,
                mask,
                values,
                trace_index,
                bus_states,
            });
        }
    }

    fn complete(&mut self, core: usize, op: Op, issue: Ps, done: Ps) -> Result<(), RunError> {
        self.samples.push(LatencySample {
            class: match op {
                Op::R => "core_read",
                Op::W => "core_write",
            }
            .into(),
            t_inject: issue,
            t_complete: done,
        });
        self.schedule_next_issue(core, done)
    }

    fn fault(now: Ps) -> impl Fn(CoherenceFault) -> RunError {
        move |fault| RunError::Coherence { time: now, fault }
    }

    fn on_issue(&mut self, core: usize, now: Ps) -> Result<(), RunError> {
        let Some((trace_idx, rec)) = self.cores[core].queue.pop_front() else {
            return Ok(());
        };
        let (c, n) = self.locate(core);
        let block = self.spec.l1d.geometry.block_size;
        let mask = word_mask(rec.addr % block, u64::from(rec.size));
        let value = trace_idx as u64 + 1;
        let op = op_of(rec.op);
        let addr = rec.addr;
        let fault = Self::fault(now);
        let cl = &mut self.clusters[c];
        let mut t = now;

        let mut read_values = None;
        let mut needs_bus = false;
        match cl.nodes[n].l1d.lookup(op, addr, t) {
            Lookup::Hit { idx, latency } => {
                t += latency;
                let state = cl.nodes[n].l1d.line(idx).state;
                match rec.op {
                    Op::R => read_values = Some(words_of(&cl.nodes[n].l1d.line(idx).data, mask)),
                    Op::W if matches!(state, Moesi::M | Moesi::E) => {
                        cl.set_node_state(n, addr, Moesi::M);
                        cl.store_in_node(n, addr, mask, value, now)
                            .map_err(&fault)?;
                    }
                    Op::W => needs_bus = true,
                }
            }
            Lookup::Miss { latency } => {
                t += latency;
                let l2_hit = match cl.nodes[n].l2.as_mut() {
                    Some(l2) => match l2.lookup(op, addr, t) {
                        Lookup::Hit { idx, latency } => {
                            t += latency;
                            Some((l2.line(idx).state, l2.line(idx).data.clone()))
                        }
                        Lookup::Miss { latency } => {
                            t += latency;
                            None
                        }
                    },
                    None => None,
                };
                match l2_hit {
                    Some((state, data))
                        if rec.op == Op::R || matches!(state, Moesi::M | Moesi::E) =>
                    {
                        let state = if rec.op == Op::W { Moesi::M } else { state };
                        cl.set_node_state(n, addr, state);
                        cl.install(n, addr, state, &data, false, now)
                            .map_err(&fault)?;
                        match rec.op {
                            Op::R => read_values = Some(words_of(&data, mask)),
                            Op::W => {
                                if !cl
                                    .store_in_node(n, addr, mask, value, now)
                                    .map_err(&fault)?
                                {
                                    unreachable!("L2 copy present");
                                }
                            }
                        }
                    }
                    _ => needs_bus = true,
                }
            }
        }

        if needs_bus {
            self.cores[core].pending = Some(Pending {
                trace_idx,
                op: rec.op,
                addr,
                mask,
                issue: now,
            });
            return self.schedule(t, core, Ev::BusRequest(core));
        }
        let values = read_values.unwrap_or_else(|| vec![value]);
        self.log(core, c, (trace_idx, rec.op, addr, mask), values, None);
        self.complete(core, rec.op, now, t)
    }

    fn on_bus_request(&mut self, core: usize, now: Ps) -> Result<(), RunError> {
        let (c, n) = self.locate(core);
        let (_, end) = self.clusters[c]
            .bus
            .reserve(ChannelKind::Request, n, 0, now);
        self.schedule(end, core, Ev::BusGrant(core))
    }

    fn on_bus_grant(&mut self, core: usize, now: Ps) -> Result<(), RunError> {
        let p = self.cores[core]
            .pending
            .take()
            .expect("grant without request");
        let (c, n) = self.locate(core);
        let fault = Self::fault(now);
        let cl = &mut self.clusters[c];
        let addr = p.addr;
        let value = p.trace_idx as u64 + 1;

        let before = cl.states(addr);
        let event = match p.op {
            Op::R => CoherenceEvent::CoreRead(n),
            Op::W => CoherenceEvent::CoreWrite(n),
        };
        let out = coherence_step(&before, event).map_err(&fault)?;
        let (_, snoop_end) = cl.bus.reserve(ChannelKind::Snoop, n, 0, now);

        let (data, ready) = match out.source {
            DataSource::Cache(o) => {
                let (d, _) = cl.node_data(o, addr).expect("owner holds the block");
                (Some(d), snoop_end + cl.supply_latency(o, addr))
            }
            DataSource::Memory => {
                let (d, r) = cl.mem_read(addr, snoop_end);
                (Some(d), r)
            }
            DataSource::Local => (None, snoop_end),
        };

        for (i, (old, new)) in before.iter().zip(&out.states).enumerate() {
            if i != n && old != new {
                cl.set_node_state(i, addr, *new);
            }
        }

        let state = out.states[n];
        let in_l1 = cl.nodes[n].l1d.probe(addr).is_some();
        let in_l2 = cl.nodes[n]
            .l2
            .as_ref()
            .and_then(|l2| l2.probe(addr))
            .is_some();
        let block = match &data {
            Some(d) => d.clone(),
            None => cl
                .node_data(n, addr)
                .map(|(d, _)| d)
                .unwrap_or_else(|| vec![0; cl.words]),
        };
        if in_l1 || in_l2 {
            cl.set_node_state(n, addr, state);
            if !in_l1 {
                cl.install(n, addr, state, &block, false, now)
                    .map_err(&fault)?;
            }
        } else {
            cl.install(n, addr, state, &block, true, now)
                .map_err(&fault)?;
        }

        let values = match p.op {
            Op::R => {
                let fresh = cl
                    .node_data(n, addr)
                    .map(|(d, _)| d)
                    .unwrap_or_else(|| block.clone());
                let v = words_of(&fresh, p.mask);
                if cl.node_data(n, addr).is_none() && state.is_valid() {
                    // nowhere to keep the block
                    let ev = Evicted {
                        block_addr: addr - addr % cl.block_size,
                        state,
                        data: block,
                        dirty_mask: 0,
                        cause: EvictCause::Wear,
                    };
                    cl.node_evict(n, ev, now).map_err(&fault)?;
                }
                v
            }
            Op::W => {
                if !cl
                    .store_in_node(n, addr, p.mask, value, now)
                    .map_err(&fault)?
                {
                    let mut data = block;
                    for (w, word) in data.iter_mut().enumerate() {
                        if p.mask & (1 << w) != 0 {
                            *word = value;
                        }
                    }
                    let ev = Evicted {
                        block_addr: addr - addr % cl.block_size,
                        state,
                        data,
                        dirty_mask: p.mask,
                        cause: EvictCause::Wear,
                    };
                    cl.node_evict(n, ev, now).map_err(&fault)?;
                }
                vec![value]
            }
        };
        let states = cl.states(addr);
        check_invariants(&states).map_err(&fault)?;

        let done = match data {
            Some(_) => {
                cl.bus
                    .reserve(ChannelKind::Response, n, cl.block_size, ready)
                    .1
            }
            None => ready,
        };
        self.log(
            core,
            c,
            (p.trace_idx, p.op, addr, p.mask),
            values,
            Some(states),
        );
        self.complete(core, p.op, p.issue, done)
    }

    /// Assembles the run report.
    pub fn report(&self, meta: Meta, bucket_ps: u64) -> Report {
        let duration_ns = self.duration as f64 / 1e3;
        let mix = self.spec.write_mix;
        let placement = self.spec.placement();

        struct Acc {
            report: LevelReport,
            hit_latency: u128,
        }
        let mut levels: BTreeMap<usize, Acc> = BTreeMap::new();
        let mut tier_energy = vec![0.0; self.spec.tiers.len()];
        let mut tier_area = vec![0.0; self.spec.tiers.len()];
        let mut tier_parts: Vec<BTreeMap<&str, usize>> =
            vec![BTreeMap::new(); self.spec.tiers.len()];
        let mut endurance = EnduranceReport::default();
        let mut first_wear: Option<(Ps, FirstWear)> = None;

        for (c, cl) in self.clusters.iter().enumerate() {
            for inst in cl.instances() {
                let key = inst.name.rsplit('.').next().unwrap_or("");
                let order = LEVEL_ORDER
                    .iter()
                    .position(|k| *k == key)
                    .expect("known level");
                let tier = match key {
                    "l1i" | "l1d" => placement.cores[c],
                    "l3" => placement.l3[c].unwrap_or(placement.cores[c]),
                    _ => placement.l2[c].unwrap_or(placement.cores[c]),
                };
                let busy = (inst.busy_time() as f64 / 1e3).min(duration_ns);
                let stats = inst.stats();
                let acc = levels.entry(order).or_insert_with(|| Acc {
                    report: LevelReport {
                        name: key.to_string(),
                        instances: 0,
                        hits: 0,
                        misses: 0,
                        evictions: 0,
                        writebacks: 0,
                        fills: 0,
                        demotions: 0,
                        mean_hit_latency_ps: None,
                        regions: inst
                            .regions()
                            .iter()
                            .enumerate()
                            .map(|(r, reg)| RegionReport {
                                tech: reg.tech.name.clone(),
                                capacity_mib: inst.region_capacity_mib(r),
                                counters: AccessCounters::default(),
                                energy_nj: 0.0,
                            })
                            .collect(),
                        energy_nj: 0.0,
                    },
                    hit_latency: 0,
                });
                let l = &mut acc.report;
                l.instances += 1;
                l.hits += stats.hits;
                l.misses += stats.misses;
                l.evictions += stats.evictions;
                l.writebacks += stats.writebacks;
                l.fills += stats.fills;
                l.demotions += stats.demotions;
                acc.hit_latency += stats.hit_latency_sum;
                for (r, reg) in inst.regions().iter().enumerate() {
                    let counters = AccessCounters {
                        n_read: reg.n_read,
                        n_write: reg.n_write,
                        busy_time: busy,
                        idle_time: duration_ns - busy,
                    };
                    let cap = inst.region_capacity_mib(r);
                    tier_energy[tier] += level_energy(&counters, &reg.tech, cap, mix);
                    tier_area[tier] += area_estimate(cap, &reg.tech);
                    let agg = &mut l.regions[r].counters;
                    agg.n_read += counters.n_read;
                    agg.n_write += counters.n_write;
                    agg.busy_time += counters.busy_time;
                    agg.idle_time += counters.idle_time;
                }
                *tier_parts[tier].entry(key).or_default() += 1;

                endurance.max_write_count = endurance.max_write_count.max(inst.max_write_count());
                endurance.worn_blocks += inst.worn_blocks();
                endurance.wear_events += stats.wear_events;
                if let Some(ev) = &stats.first_wear {
                    if first_wear.as_ref().is_none_or(|(t, _)| ev.time_ps < *t) {
                        first_wear = Some((ev.time_ps, FirstWear::new(&inst.name, ev)));
                    }
                }
            }
            if let Some(t) = placement.memory[c] {
                *tier_parts[t].entry("memory_controller").or_default() += 1;
            }
        }
        endurance.first_wear = first_wear.map(|(_, f)| f);

        let levels: Vec<LevelReport> = levels
            .into_values()
            .map(|mut acc| {
                let l = &mut acc.report;
                for r in &mut l.regions {
                    r.energy_nj =
                        level_energy(&r.counters, &self.catalog[&r.tech], r.capacity_mib, mix);
                }
                l.energy_nj = l.regions.iter().map(|r| r.energy_nj).sum();
                l.mean_hit_latency_ps =
                    (l.hits > 0).then(|| acc.hit_latency as f64 / l.hits as f64);
                acc.report
            })
            .collect();
        let total_energy_nj = levels.iter().map(|l| l.energy_nj).sum();

        let mut by_class: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for s in &self.samples {
            by_class
                .entry(s.class.clone())
                .or_default()
                .push(s.t_complete - s.t_inject);
        }
        let latency = by_class
            .into_iter()
            .map(|(k, v)| (k, summarize_latency(&v, bucket_ps)))
            .collect();

        let mut bus = BusReport::default();
        let mut l1_misses = 0;
        for cl in &self.clusters {
            bus.transactions += cl.bus.request.grants();
            bus.writebacks += cl.writebacks;
            bus.request_busy_cycles += cl.bus.request.busy_cycles();
            bus.response_busy_cycles += cl.bus.response.busy_cycles();
            bus.snoop_busy_cycles += cl.bus.snoop.busy_cycles();
            l1_misses += cl.nodes.iter().map(|n| n.l1d.stats().misses).sum::<u64>();
        }
        let interconnect = InterconnectReport {
            l1_misses,
            transactions_per_l1_miss: (l1_misses > 0)
                .then(|| bus.transactions as f64 / l1_misses as f64),
            bus,
            noc: self
                .noc
                .as_ref()
                .map(|n| NocReport::from(n.counters()))
                .unwrap_or_default(),
        };

        let tiers = self
            .spec
            .tiers
            .iter()
            .enumerate()
            .map(|(i, t)| TierReport {
                index: i,
                kind: t.kind.name().to_string(),
                components: tier_parts[i]
                    .iter()
                    .map(|(k, n)| format!("{n} x {k}"))
                    .collect(),
                area: tier_area[i],
                energy_nj: tier_energy[i],
                power_density_mw_per_unit: tier_power_density(
                    tier_energy[i],
                    duration_ns,
                    tier_area[i],
                )
                .ok(),
            })
            .collect();

        let mut notes = vec![
            "standby power of volatile technologies is a configurable parameter".to_string(),
            "idle time is simulated time minus the union of access windows".to_string(),
        ];
        notes.extend(self.spec.warnings());

        Report {
            meta,
            duration_ps: self.duration,
            write_mix: mix,
            levels,
            total_energy_nj,
            latency,
            interconnect,
            endurance,
            tiers,
            notes,
        }
    }
}
