use serde::{Deserialize, Serialize};

/// Word granularity used for dirty masks and partial writes.
pub const WORD_BYTES: u64 = 8;

/// Dirty masks are 64-bit, which bounds the block size.
pub const MAX_BLOCK_SIZE: u64 = 64 * WORD_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    #[default]
    Lru,
    PseudoRandom,
}

/// A contiguous way range `[start, end)` built from one technology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub ways: [u32; 2],
    pub tech: String,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheGeometry {
    /// bytes
    pub capacity: u64,
    /// bytes
    pub block_size: u64,
    pub associativity: u32,
    #[serde(default = "one")]
    pub banks: u32,
    #[serde(default)]
    pub replacement: Replacement,
    /// cycles
    #[serde(default)]
    pub nuca_base_latency: u64,
    /// cycles per bank hop
    #[serde(default)]
    pub nuca_per_hop: u64,
    /// Hybrid way partition; empty means the whole level uses one technology.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub partial_writes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressParts {
    pub tag: u64,
    pub set: u64,
    pub offset: u64,
}

impl CacheGeometry {
    pub fn new(capacity: u64, block_size: u64, associativity: u32) -> Self {
        CacheGeometry {
            capacity,
            block_size,
            associativity,
            banks: 1,
            replacement: Replacement::Lru,
            nuca_base_latency: 0,
            nuca_per_hop: 0,
            regions: Vec::new(),
            partial_writes: false,
        }
    }

    pub fn sets(&self) -> u64 {
        let way_bytes = self.block_size * u64::from(self.associativity);
        self.capacity.checked_div(way_bytes).unwrap_or(0)
    }

    pub fn words_per_block(&self) -> usize {
        (self.block_size / WORD_BYTES) as usize
    }

    /// Every geometry constraint that does not hold, as human-readable text.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.block_size.is_power_of_two() {
            out.push("block_size not a power of two".to_string());
        } else if self.block_size < WORD_BYTES || self.block_size > MAX_BLOCK_SIZE {
            out.push(format!(
                "block_size must lie in [{WORD_BYTES}, {MAX_BLOCK_SIZE}] bytes"
            ));
        }
        if self.associativity == 0 {
            out.push("associativity must be at least 1".to_string());
        }
        if self.capacity == 0 {
            out.push("capacity must be positive".to_string());
        }
        if out.is_empty() {
            let way_bytes = self.block_size * u64::from(self.associativity);
            let sets = self.sets();
            if !self.capacity.is_multiple_of(way_bytes) || sets == 0 {
                out.push(format!(
                    "capacity {} is not a multiple of block_size x associativity ({way_bytes})",
                    self.capacity
                ));
            } else if !sets.is_power_of_two() {
                out.push(format!("set count {sets} not a power of two"));
            } else if self.banks == 0 || !sets.is_multiple_of(u64::from(self.banks)) {
                out.push(format!(
                    "banks ({}) must divide the set count ({sets})",
                    self.banks
                ));
            }
        }
        if !self.regions.is_empty() {
            let mut ranges: Vec<[u32; 2]> = self.regions.iter().map(|r| r.ways).collect();
            ranges.sort_unstable();
            let mut next = 0;
            let mut ok = true;
            for [start, end] in ranges {
                if start != next || end <= start {
                    ok = false;
                    break;
                }
                next = end;
            }
            if !ok || next != self.associativity {
                out.push(format!(
                    "region way ranges must partition [0, {})",
                    self.associativity
                ));
            }
        }
        out
    }

    pub fn decompose(&self, addr: u64) -> AddressParts {
        let sets = self.sets();
        AddressParts {
            tag: addr / (self.block_size * sets),
            set: (addr / self.block_size) % sets,
            offset: addr % self.block_size,
        }
    }

    pub fn recompose(&self, parts: AddressParts) -> u64 {
        (parts.tag * self.sets() + parts.set) * self.block_size + parts.offset
    }

    pub fn block_addr(&self, addr: u64) -> u64 {
        addr - addr % self.block_size
    }

    /// Banks are interleaved by set index.
    pub fn bank_of_set(&self, set: u64) -> u64 {
        set % u64::from(self.banks.max(1))
    }

    /// Cycles to reach `bank`, which sits `bank` hops from the controller.
    pub fn nuca_latency(&self, bank: u64) -> u64 {
        self.nuca_base_latency + self.nuca_per_hop * bank
    }

    /// Capacity share of each region, in way order; a single entry for
    /// homogeneous levels.
    pub fn region_ways(&self) -> Vec<(std::ops::Range<u32>, Option<&str>)> {
        if self.regions.is_empty() {
            return vec![(0..self.associativity, None)];
        }
        let mut r: Vec<_> = self
            .regions
            .iter()
            .map(|r| (r.ways[0]..r.ways[1], Some(r.tech.as_str())))
            .collect();
        r.sort_by_key(|(range, _)| range.start);
        r
    }
}

/// Bit mask of the words touched by an access of `size` bytes at `offset`.
pub fn word_mask(offset: u64, size: u64) -> u64 {
    let first = offset / WORD_BYTES;
    let last = (offset + size.max(1) - 1) / WORD_BYTES;
    let mut mask = 0u64;
    for w in first..=last.min(63) {
        mask |= 1 << w;
    }
    mask
}
