//! Set-associative caches with MOESI coherence, NUCA banking, hybrid
//! technology regions and write-endurance tracking.

mod geometry;
mod level;
mod moesi;

pub use geometry::{
    word_mask, AddressParts, CacheGeometry, Region, Replacement, MAX_BLOCK_SIZE, WORD_BYTES,
};
pub use level::{
    check_wear, select_victim, CacheLevel, CacheLine, CoreOp, EvictCause, Evicted, Fill,
    LevelStats, Lookup, RegionState, WearEvent, WearStatus,
};
pub use moesi::{
    check_invariants, coherence_step, BusAction, CoherenceEvent, CoherenceFault, CoherenceOutcome,
    DataSource, Moesi,
};
