use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::geometry::{CacheGeometry, Replacement};
use super::moesi::Moesi;
use crate::engine::{cycles_for_latency, Ps};
use crate::memtech::TechnologyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoreOp {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheLine {
    pub tag: u64,
    pub state: Moesi,
    pub lru_stamp: u64,
    /// Writes absorbed by the most-written word of this way.
    pub write_count: u64,
    pub dirty_word_mask: u64,
    /// Permanently unusable after exceeding its endurance.
    pub worn: bool,
    pub data: Vec<u64>,
    word_wear: Vec<u64>,
}

impl CacheLine {
    pub fn empty(words: usize) -> Self {
        CacheLine {
            tag: 0,
            state: Moesi::I,
            lru_stamp: 0,
            write_count: 0,
            dirty_word_mask: 0,
            worn: false,
            data: vec![0; words],
            word_wear: vec![0; words],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.state.is_valid() && !self.worn
    }

    pub fn usable(&self) -> bool {
        !self.worn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WearStatus {
    Ok,
    WornOut,
}

pub fn check_wear(line: &CacheLine, params: &TechnologyParams) -> WearStatus {
    if params.endurance.exceeded_by(line.write_count) {
        WearStatus::WornOut
    } else {
        WearStatus::Ok
    }
}

/// Picks the way to fill. Worn ways are never chosen; an invalid way is
/// always preferred. Returns `None` when every way is worn.
pub fn select_victim(ways: &[CacheLine], policy: Replacement, rng: &mut impl Rng) -> Option<usize> {
    if let Some(i) = ways.iter().position(|l| l.usable() && !l.state.is_valid()) {
        return Some(i);
    }
    let candidates: Vec<usize> = (0..ways.len()).filter(|i| ways[*i].usable()).collect();
    if candidates.is_empty() {
        return None;
    }
    match policy {
        Replacement::Lru => candidates.into_iter().min_by_key(|i| ways[*i].lru_stamp),
        Replacement::PseudoRandom => Some(candidates[rng.random_range(0..candidates.len())]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvictCause {
    Replacement,
    Wear,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evicted {
    pub block_addr: u64,
    pub state: Moesi,
    pub data: Vec<u64>,
    pub dirty_mask: u64,
    pub cause: EvictCause,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit { idx: usize, latency: Ps },
    Miss { latency: Ps },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fill {
    /// Line holding the new block, `None` when the set could not take it.
    pub idx: Option<usize>,
    pub evicted: Vec<Evicted>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WearEvent {
    pub time_ps: Ps,
    pub block_addr: u64,
    pub write_ordinal: u64,
}

#[derive(Debug, Clone)]
pub struct RegionState {
    pub tech: TechnologyParams,
    pub ways: Range<usize>,
    pub n_read: u64,
    pub n_write: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct BusyTracker {
    until: Ps,
    busy: Ps,
}

impl BusyTracker {
    fn record(&mut self, start: Ps, len: Ps) {
        let end = start + len;
        if start >= self.until {
            self.busy += len;
        } else if end > self.until {
            self.busy += end - self.until;
        }
        self.until = self.until.max(end);
    }
}

#[derive(Debug, Clone, Default)]
pub struct LevelStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub writebacks: u64,
    pub fills: u64,
    pub demotions: u64,
    pub hit_latency_sum: u128,
    pub word_writes: u64,
    pub wear_events: u64,
    pub first_wear: Option<WearEvent>,
}

/// One cache instance.
pub struct CacheLevel {
    pub name: String,
    geom: CacheGeometry,
    sets: usize,
    ways: usize,
    words: usize,
    lines: Vec<CacheLine>,
    region_of_way: Vec<usize>,
    regions: Vec<RegionState>,
    clock: Ps,
    stamp: u64,
    rng: ChaCha8Rng,
    busy: BusyTracker,
    stats: LevelStats,
}

impl CacheLevel {
    /// `techs` holds one parameter record per region in way order (a single
    /// record for homogeneous levels). The geometry must be valid.
    pub fn new(
        name: impl Into<String>,
        geom: CacheGeometry,
        techs: Vec<TechnologyParams>,
        clock: Ps,
        rng: ChaCha8Rng,
    ) -> Self {
        assert!(
            geom.violations().is_empty(),
            "invalid geometry: {:?}",
            geom.violations()
        );
        let ranges = geom.region_ways();
        assert_eq!(ranges.len(), techs.len(), "one technology per region");
        let ways = geom.associativity as usize;
        let sets = geom.sets() as usize;
        let words = geom.words_per_block();
        let mut region_of_way = vec![0; ways];
        let regions = ranges
            .into_iter()
            .zip(techs)
            .enumerate()
            .map(|(r, ((range, _), tech))| {
                let range = range.start as usize..range.end as usize;
                for w in range.clone() {
                    region_of_way[w] = r;
                }
                RegionState {
                    tech,
                    ways: range,
                    n_read: 0,
                    n_write: 0,
                }
            })
            .collect();
        CacheLevel {
            name: name.into(),
            geom,
            sets,
            ways,
            words,
            lines: vec![CacheLine::empty(words); sets * ways],
            region_of_way,
            regions,
            clock,
            stamp: 0,
            rng,
            busy: BusyTracker::default(),
            stats: LevelStats::default(),
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geom
    }

    pub fn regions(&self) -> &[RegionState] {
        &self.regions
    }

    pub fn stats(&self) -> &LevelStats {
        &self.stats
    }

    pub fn busy_time(&self) -> Ps {
        self.busy.busy
    }

    pub fn lines(&self) -> &[CacheLine] {
        &self.lines
    }

    pub fn line(&self, idx: usize) -> &CacheLine {
        &self.lines[idx]
    }

    pub fn words_per_block(&self) -> usize {
        self.words
    }

    pub fn block_addr(&self, addr: u64) -> u64 {
        self.geom.block_addr(addr)
    }

    fn set_range(&self, set: usize) -> Range<usize> {
        set * self.ways..(set + 1) * self.ways
    }

    fn line_addr(&self, idx: usize) -> u64 {
        let set = (idx / self.ways) as u64;
        (self.lines[idx].tag * self.sets as u64 + set) * self.geom.block_size
    }

    fn full_mask(&self) -> u64 {
        if self.words == 64 {
            u64::MAX
        } else {
            (1u64 << self.words) - 1
        }
    }

    fn next_stamp(&mut self) -> u64 {
        self.stamp += 1;
        self.stamp
    }

    fn region_latency(&self, region: usize, op: CoreOp) -> Ps {
        let tech = &self.regions[region].tech;
        let ns = match op {
            CoreOp::Read => tech.read_latency,
            CoreOp::Write => tech.line_write_latency(),
        };
        cycles_for_latency(ns, self.clock) * self.clock
    }

    fn bank_latency(&self, set: u64) -> Ps {
        self.geom.nuca_latency(self.geom.bank_of_set(set)) * self.clock
    }

    /// Line index of a valid copy of `addr`, without side effects.
    pub fn probe(&self, addr: u64) -> Option<usize> {
        let p = self.geom.decompose(addr);
        self.set_range(p.set as usize)
            .find(|i| self.lines[*i].is_valid() && self.lines[*i].tag == p.tag)
    }

    /// Hit latency of the way holding `idx`.
    pub fn hit_latency(&self, idx: usize, op: CoreOp) -> Ps {
        let set = (idx / self.ways) as u64;
        self.region_latency(self.region_of_way[idx % self.ways], op) + self.bank_latency(set)
    }

    /// Demand access: counts it, refreshes LRU state on a hit and returns the
    /// access latency. Writes are applied separately with [`Self::store`].
    pub fn lookup(&mut self, op: CoreOp, addr: u64, now: Ps) -> Lookup {
        let set = self.geom.decompose(addr).set;
        let result = match self.probe(addr) {
            Some(idx) => {
                let region = self.region_of_way[idx % self.ways];
                let latency = self.hit_latency(idx, op);
                self.count(region, op);
                self.stats.hits += 1;
                self.stats.hit_latency_sum += u128::from(latency);
                let stamp = self.next_stamp();
                self.lines[idx].lru_stamp = stamp;
                Lookup::Hit { idx, latency }
            }
            None => {
                let latency = self.region_latency(0, CoreOp::Read) + self.bank_latency(set);
                self.count(0, op);
                self.stats.misses += 1;
                Lookup::Miss { latency }
            }
        };
        let latency = match result {
            Lookup::Hit { latency, .. } | Lookup::Miss { latency } => latency,
        };
        self.busy.record(now, latency);
        result
    }

    fn count(&mut self, region: usize, op: CoreOp) {
        match op {
            CoreOp::Read => self.regions[region].n_read += 1,
            CoreOp::Write => self.regions[region].n_write += 1,
        }
    }

    fn take_line(&mut self, idx: usize, cause: EvictCause) -> Evicted {
        let block_addr = self.line_addr(idx);
        let words = self.words;
        let line = &mut self.lines[idx];
        let ev = Evicted {
            block_addr,
            state: line.state,
            data: std::mem::replace(&mut line.data, vec![0; words]),
            dirty_mask: line.dirty_word_mask,
            cause,
        };
        line.state = Moesi::I;
        line.dirty_word_mask = 0;
        ev
    }

    fn note_eviction(&mut self, ev: &Evicted) {
        self.stats.evictions += 1;
        if ev.state.is_owner() {
            self.stats.writebacks += 1;
        }
    }

    /// Charges one write of the words in `mask` (all words unless partial
    /// writes are enabled). Returns true if the way just wore out.
    fn record_write(&mut self, idx: usize, mask: u64, now: Ps) -> bool {
        let words = if self.geom.partial_writes {
            mask
        } else {
            self.full_mask()
        };
        let region = self.region_of_way[idx % self.ways];
        let line = &mut self.lines[idx];
        let mut written = 0;
        for w in 0..self.words {
            if words & (1 << w) != 0 {
                line.word_wear[w] += 1;
                written += 1;
            }
        }
        line.write_count = line.word_wear.iter().copied().max().unwrap_or(0);
        self.stats.word_writes += written;
        if !line.worn && check_wear(line, &self.regions[region].tech) == WearStatus::WornOut {
            line.worn = true;
            let event = WearEvent {
                time_ps: now,
                block_addr: self.line_addr(idx),
                write_ordinal: self.lines[idx].write_count,
            };
            self.stats.wear_events += 1;
            self.stats.first_wear.get_or_insert(event);
            return true;
        }
        false
    }

    fn retire_if_worn(&mut self, idx: usize, worn: bool) -> Option<Evicted> {
        if !worn {
            return None;
        }
        let ev = self.take_line(idx, EvictCause::Wear);
        self.note_eviction(&ev);
        Some(ev)
    }

    /// Writes `value` into the words of `mask` of a resident line.
    pub fn store(&mut self, idx: usize, mask: u64, value: u64, now: Ps) -> Option<Evicted> {
        let line = &mut self.lines[idx];
        for w in 0..self.words {
            if mask & (1 << w) != 0 {
                line.data[w] = value;
            }
        }
        line.dirty_word_mask |= mask;
        let worn = self.record_write(idx, mask, now);
        self.retire_if_worn(idx, worn)
    }

    /// Overwrites a resident line with block data received from above.
    pub fn store_block(
        &mut self,
        idx: usize,
        data: &[u64],
        dirty_mask: u64,
        now: Ps,
    ) -> Option<Evicted> {
        let line = &mut self.lines[idx];
        line.data.copy_from_slice(data);
        line.dirty_word_mask |= dirty_mask;
        let worn = self.record_write(idx, dirty_mask, now);
        self.retire_if_worn(idx, worn)
    }

    pub fn set_state(&mut self, idx: usize, state: Moesi) {
        let line = &mut self.lines[idx];
        line.state = state;
        if !state.is_owner() {
            line.dirty_word_mask = 0;
        }
    }

    /// Marks words of a resident line dirty without writing them.
    pub fn mark_dirty(&mut self, idx: usize, mask: u64) {
        self.lines[idx].dirty_word_mask |= mask;
    }

    /// Drops a resident line because of a coherence action.
    pub fn invalidate(&mut self, idx: usize) -> Evicted {
        self.take_line(idx, EvictCause::Replacement)
    }

    fn region_victim(&mut self, set: usize, region: usize) -> Option<usize> {
        let ways = self.regions[region].ways.clone();
        let base = set * self.ways;
        let slice = &self.lines[base + ways.start..base + ways.end];
        select_victim(slice, self.geom.replacement, &mut self.rng).map(|w| base + ways.start + w)
    }

    /// Installs a block. Fills go to the first region with a usable way; a
    /// displaced line is demoted into the next region, and whatever leaves
    /// the last region is returned as evicted. `write` marks fills that carry
    /// written data (charged against endurance).
    pub fn fill(
        &mut self,
        addr: u64,
        state: Moesi,
        data: Vec<u64>,
        dirty_mask: u64,
        write: bool,
        now: Ps,
    ) -> Fill {
        debug_assert!(
            self.probe(addr).is_none(),
            "{}: block already resident",
            self.name
        );
        debug_assert_eq!(data.len(), self.words);
        let p = self.geom.decompose(addr);
        let set = p.set as usize;
        let mut evicted = Vec::new();

        let Some((first_region, victim)) =
            (0..self.regions.len()).find_map(|r| self.region_victim(set, r).map(|v| (r, v)))
        else {
            return Fill { idx: None, evicted };
        };

        // demotion chain
        let mut displaced = if self.lines[victim].state.is_valid() {
            Some(self.take_line(victim, EvictCause::Replacement))
        } else {
            None
        };
        let mut region = first_region + 1;
        while let Some(line) = displaced.take() {
            let dest = (region..self.regions.len())
                .find_map(|r| self.region_victim(set, r).map(|v| (r, v)));
            match dest {
                Some((r, dest)) => {
                    let next = if self.lines[dest].state.is_valid() {
                        Some(self.take_line(dest, EvictCause::Replacement))
                    } else {
                        None
                    };
                    let stamp = self.next_stamp();
                    let tag = self.geom.decompose(line.block_addr).tag;
                    let l = &mut self.lines[dest];
                    l.tag = tag;
                    l.state = line.state;
                    l.lru_stamp = stamp;
                    l.data = line.data;
                    l.dirty_word_mask = line.dirty_mask;
                    self.stats.demotions += 1;
                    // the destination way is rewritten in full
                    let worn = self.record_write(dest, self.full_mask(), now);
                    if let Some(ev) = self.retire_if_worn(dest, worn) {
                        evicted.push(ev);
                    }
                    displaced = next;
                    region = r + 1;
                }
                None => {
                    self.note_eviction(&line);
                    evicted.push(line);
                }
            }
        }

        let stamp = self.next_stamp();
        let l = &mut self.lines[victim];
        l.tag = p.tag;
        l.state = state;
        l.lru_stamp = stamp;
        l.data = data;
        l.dirty_word_mask = dirty_mask;
        self.stats.fills += 1;
        if write {
            let worn = self.record_write(victim, dirty_mask, now);
            if let Some(ev) = self.retire_if_worn(victim, worn) {
                evicted.push(ev);
                return Fill { idx: None, evicted };
            }
        }
        Fill {
            idx: Some(victim),
            evicted,
        }
    }

    pub fn max_write_count(&self) -> u64 {
        self.lines.iter().map(|l| l.write_count).max().unwrap_or(0)
    }

    pub fn worn_blocks(&self) -> u64 {
        self.lines.iter().filter(|l| l.worn).count() as u64
    }

    pub fn capacity_mib(&self) -> f64 {
        self.geom.capacity as f64 / (1024.0 * 1024.0)
    }

    /// Capacity of region `r` in MiB.
    pub fn region_capacity_mib(&self, r: usize) -> f64 {
        let ways = self.regions[r].ways.len() as f64;
        self.capacity_mib() * ways / self.ways as f64
    }

    /// Checks per-set structural invariants: one valid line per tag and
    /// distinct LRU stamps among valid lines.
    pub fn check_structure(&self) -> Result<(), String> {
        for set in 0..self.sets {
            let valid: Vec<&CacheLine> = self.lines[self.set_range(set)]
                .iter()
                .filter(|l| l.is_valid())
                .collect();
            for (i, a) in valid.iter().enumerate() {
                for b in &valid[i + 1..] {
                    if a.tag == b.tag {
                        return Err(format!(
                            "{}: set {set} holds tag {} twice",
                            self.name, a.tag
                        ));
                    }
                    if a.lru_stamp == b.lru_stamp {
                        return Err(format!("{}: set {set} repeats an LRU stamp", self.name));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::component_rng;
    use crate::memtech::{catalog_default, Endurance};
    use rand::SeedableRng;

    fn sram() -> TechnologyParams {
        catalog_default()["SRAM"].clone()
    }

    fn level(geom: CacheGeometry) -> CacheLevel {
        let techs = geom
            .region_ways()
            .iter()
            .map(|(_, t)| catalog_default()[t.unwrap_or("SRAM")].clone())
            .collect();
        CacheLevel::new("t", geom, techs, 1000, component_rng(1, "t"))
    }

    fn fill_read(c: &mut CacheLevel, addr: u64) -> Fill {
        let words = c.words_per_block();
        c.fill(addr, Moesi::E, vec![0; words], 0, false, 0)
    }

    #[test]
    fn lru_victim_after_reuse() {
        // one set, two ways
        let mut c = level(CacheGeometry::new(128, 64, 2));
        let (a, b, cc) = (0, 64, 128);
        fill_read(&mut c, a);
        fill_read(&mut c, b);
        assert!(matches!(c.lookup(CoreOp::Read, a, 0), Lookup::Hit { .. }));
        let f = fill_read(&mut c, cc);
        assert_eq!(f.evicted.len(), 1);
        assert_eq!(f.evicted[0].block_addr, b);
        c.check_structure().unwrap();
    }

    #[test]
    fn victim_prefers_invalid_way() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ways: Vec<CacheLine> = (0..4).map(|_| CacheLine::empty(8)).collect();
        for (i, s) in [5, 3, 9, 1].into_iter().enumerate() {
            ways[i].state = Moesi::S;
            ways[i].lru_stamp = s;
        }
        assert_eq!(select_victim(&ways, Replacement::Lru, &mut rng), Some(3));
        ways[2].state = Moesi::I;
        assert_eq!(select_victim(&ways, Replacement::Lru, &mut rng), Some(2));
        assert_eq!(
            select_victim(&ways, Replacement::PseudoRandom, &mut rng),
            Some(2)
        );
        for w in &mut ways {
            w.worn = true;
        }
        assert_eq!(select_victim(&ways, Replacement::Lru, &mut rng), None);
    }

    #[test]
    fn pseudo_random_is_reproducible() {
        let run = || {
            let mut rng = component_rng(42, "l2");
            let mut ways: Vec<CacheLine> = (0..16).map(|_| CacheLine::empty(8)).collect();
            for w in &mut ways {
                w.state = Moesi::S;
            }
            (0..100)
                .map(|_| select_victim(&ways, Replacement::PseudoRandom, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().any(|w| *w != a[0]));
    }

    #[test]
    fn nuca_hit_latency_grows_with_bank() {
        let mut g = CacheGeometry::new(4 * 64 * 2, 64, 2);
        g.banks = 4;
        g.nuca_base_latency = 2;
        g.nuca_per_hop = 1;
        let mut c = level(g);
        let tech = c.region_latency(0, CoreOp::Read);
        for set in 0..4u64 {
            let addr = set * 64;
            fill_read(&mut c, addr);
            match c.lookup(CoreOp::Read, addr, 0) {
                Lookup::Hit { latency, .. } => assert_eq!(latency - tech, (2 + set) * 1000),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn partial_write_charges_only_touched_words() {
        let mut g = CacheGeometry::new(64 * 2, 64, 2);
        g.partial_writes = true;
        let mut c = level(g);
        let idx = fill_read(&mut c, 0).idx.unwrap();
        c.store(idx, 0b1, 7, 0);
        assert_eq!(c.line(idx).write_count, 1);
        assert_eq!(c.stats().word_writes, 1);

        let mut c = level(CacheGeometry::new(64 * 2, 64, 2));
        let idx = fill_read(&mut c, 0).idx.unwrap();
        c.store(idx, 0b1, 7, 0);
        assert_eq!(c.line(idx).write_count, 1);
        assert_eq!(c.stats().word_writes, 8);
    }

    #[test]
    fn wear_out_on_the_write_after_endurance() {
        let mut params = sram();
        params.endurance = Endurance::Writes(3);
        let mut line = CacheLine::empty(8);
        for n in 1..=3 {
            line.write_count = n;
            assert_eq!(check_wear(&line, &params), WearStatus::Ok);
        }
        line.write_count = 4;
        assert_eq!(check_wear(&line, &params), WearStatus::WornOut);
        line.write_count = u64::MAX;
        assert_eq!(check_wear(&line, &sram()), WearStatus::Ok);
    }

    #[test]
    fn repeated_writes_wear_exactly_one_way() {
        let mut params = sram();
        params.endurance = Endurance::Writes(1000);
        let geom = CacheGeometry::new(64 * 4, 64, 4);
        let mut c = CacheLevel::new("t", geom, vec![params], 1000, component_rng(0, "t"));
        let mut evictions = 0;
        for i in 1..=1500u64 {
            let idx = match c.probe(0) {
                Some(idx) => idx,
                None => fill_read(&mut c, 0).idx.unwrap(),
            };
            if let Some(ev) = c.store(idx, 1, i, i) {
                assert_eq!(ev.cause, EvictCause::Wear);
                assert_eq!(ev.data[0], i);
                evictions += 1;
            }
        }
        assert_eq!(evictions, 1);
        assert_eq!(c.stats().wear_events, 1);
        assert_eq!(c.stats().first_wear.unwrap().write_ordinal, 1001);
        assert_eq!(c.stats().first_wear.unwrap().time_ps, 1001);
        assert_eq!(c.worn_blocks(), 1);
    }

    #[test]
    fn hybrid_fill_demotes_into_slow_region() {
        let mut g = CacheGeometry::new(64 * 4, 64, 4);
        g.regions = vec![
            crate::cache::Region {
                ways: [0, 1],
                tech: "SRAM".into(),
            },
            crate::cache::Region {
                ways: [1, 4],
                tech: "PCRAM".into(),
            },
        ];
        let mut c = level(g);
        for b in 0..4u64 {
            assert!(fill_read(&mut c, b * 64).evicted.is_empty());
        }
        // newest block sits in the fast way
        assert_eq!(c.probe(3 * 64), Some(0));
        assert_eq!(c.stats().demotions, 3);
        let f = fill_read(&mut c, 4 * 64);
        assert_eq!(f.evicted.len(), 1);
        assert_eq!(f.evicted[0].block_addr, 0);
        c.check_structure().unwrap();
        let fast = c.hit_latency(0, CoreOp::Read);
        let slow = c.hit_latency(1, CoreOp::Read);
        assert!(fast < slow);
    }

    #[test]
    fn fully_worn_set_bypasses() {
        let mut params = sram();
        params.endurance = Endurance::Writes(1);
        let geom = CacheGeometry::new(64, 64, 1);
        let mut c = CacheLevel::new("t", geom, vec![params], 1000, component_rng(0, "t"));
        let f = c.fill(0, Moesi::M, vec![0; 8], 1, true, 0);
        assert!(f.idx.is_some());
        let f = c.fill(64, Moesi::M, vec![0; 8], 1, true, 0);
        // displaced block 0, then the new block wore the way out
        assert_eq!(f.idx, None);
        assert_eq!(f.evicted.len(), 2);
        assert_eq!(fill_read(&mut c, 128).idx, None);
    }
}
