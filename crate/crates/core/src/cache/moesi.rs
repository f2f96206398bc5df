//! MOESI snooping protocol over the global state of one block.
//!
//! The state vector holds one entry per coherent cache (or per core's
//! private stack). Transitions are pure; the caller moves data according to
//! the returned [`DataSource`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Moesi {
    M,
    O,
    E,
    S,
    #[default]
    I,
}

impl Moesi {
    pub fn is_valid(self) -> bool {
        self != Moesi::I
    }

    /// Holds the only up-to-date copy relative to memory.
    pub fn is_owner(self) -> bool {
        matches!(self, Moesi::M | Moesi::O)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoherenceEvent {
    CoreRead(usize),
    CoreWrite(usize),
    /// Effect on every other cache of a BusRd issued by the given cache.
    SnoopBusRd(usize),
    /// Effect on every other cache of a BusRdX issued by the given cache.
    SnoopBusRdX(usize),
    Evict(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusAction {
    BusRd {
        requester: usize,
    },
    BusRdX {
        requester: usize,
    },
    /// Invalidation without data transfer.
    BusUpgr {
        requester: usize,
    },
    /// Cache-to-cache data transfer.
    Flush {
        from: usize,
    },
    WriteBack {
        from: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    /// The requester already holds valid data.
    Local,
    Memory,
    Cache(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoherenceOutcome {
    pub states: Vec<Moesi>,
    pub actions: Vec<BusAction>,
    pub source: DataSource,
    /// Caches whose copy was invalidated by this step.
    pub invalidated: Vec<usize>,
}

impl CoherenceOutcome {
    pub fn uses_bus(&self) -> bool {
        self.actions.iter().any(|a| {
            matches!(
                a,
                BusAction::BusRd { .. } | BusAction::BusRdX { .. } | BusAction::BusUpgr { .. }
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoherenceFault {
    #[error("coherence invariant violated: {0}")]
    Invariant(String),
    #[error("cache index {index} out of range for {caches} caches")]
    BadIndex { index: usize, caches: usize },
}

/// Global MOESI invariants: at most one M/E holder and then every other copy
/// is invalid; at most one O holder.
pub fn check_invariants(states: &[Moesi]) -> Result<(), CoherenceFault> {
    let count = |s: Moesi| states.iter().filter(|x| **x == s).count();
    let exclusive = count(Moesi::M) + count(Moesi::E);
    let valid = states.iter().filter(|s| s.is_valid()).count();
    if exclusive > 1 {
        return Err(CoherenceFault::Invariant(format!(
            "{exclusive} caches hold the block in M or E: {states:?}"
        )));
    }
    if exclusive == 1 && valid > 1 {
        return Err(CoherenceFault::Invariant(format!(
            "exclusive copy coexists with other valid copies: {states:?}"
        )));
    }
    if count(Moesi::O) > 1 {
        return Err(CoherenceFault::Invariant(format!(
            "more than one owner: {states:?}"
        )));
    }
    Ok(())
}

fn owner_of(states: &[Moesi], except: usize) -> Option<usize> {
    states
        .iter()
        .enumerate()
        .find(|(i, s)| *i != except && s.is_owner())
        .map(|(i, _)| i)
}

fn snoop_busrd(states: &mut [Moesi], requester: usize) {
    for (i, s) in states.iter_mut().enumerate() {
        if i == requester {
            continue;
        }
        *s = match *s {
            Moesi::M | Moesi::O => Moesi::O,
            Moesi::E | Moesi::S => Moesi::S,
            Moesi::I => Moesi::I,
        };
    }
}

fn snoop_busrdx(states: &mut [Moesi], requester: usize) -> Vec<usize> {
    let mut invalidated = Vec::new();
    for (i, s) in states.iter_mut().enumerate() {
        if i != requester && s.is_valid() {
            *s = Moesi::I;
            invalidated.push(i);
        }
    }
    invalidated
}

/// Applies one protocol event to the global state of a block.
pub fn coherence_step(
    states: &[Moesi],
    event: CoherenceEvent,
) -> Result<CoherenceOutcome, CoherenceFault> {
    check_invariants(states)?;
    let n = states.len();
    let index = match event {
        CoherenceEvent::CoreRead(c)
        | CoherenceEvent::CoreWrite(c)
        | CoherenceEvent::SnoopBusRd(c)
        | CoherenceEvent::SnoopBusRdX(c)
        | CoherenceEvent::Evict(c) => c,
    };
    if index >= n {
        return Err(CoherenceFault::BadIndex { index, caches: n });
    }
    let mut next = states.to_vec();
    let mut actions = Vec::new();
    let mut invalidated = Vec::new();
    let mut source = DataSource::Local;

    match event {
        CoherenceEvent::CoreRead(c) => {
            if !states[c].is_valid() {
                actions.push(BusAction::BusRd { requester: c });
                let others_valid = states
                    .iter()
                    .enumerate()
                    .any(|(i, s)| i != c && s.is_valid());
                source = match owner_of(states, c) {
                    Some(o) => {
                        actions.push(BusAction::Flush { from: o });
                        DataSource::Cache(o)
                    }
                    None => DataSource::Memory,
                };
                snoop_busrd(&mut next, c);
                next[c] = if others_valid { Moesi::S } else { Moesi::E };
            }
        }
        CoherenceEvent::CoreWrite(c) => match states[c] {
            Moesi::M => {}
            Moesi::E => next[c] = Moesi::M,
            Moesi::S | Moesi::O => {
                actions.push(BusAction::BusUpgr { requester: c });
                invalidated = snoop_busrdx(&mut next, c);
                next[c] = Moesi::M;
            }
            Moesi::I => {
                actions.push(BusAction::BusRdX { requester: c });
                source = match owner_of(states, c) {
                    Some(o) => {
                        actions.push(BusAction::Flush { from: o });
                        DataSource::Cache(o)
                    }
                    None => DataSource::Memory,
                };
                invalidated = snoop_busrdx(&mut next, c);
                next[c] = Moesi::M;
            }
        },
        CoherenceEvent::SnoopBusRd(c) => snoop_busrd(&mut next, c),
        CoherenceEvent::SnoopBusRdX(c) => invalidated = snoop_busrdx(&mut next, c),
        CoherenceEvent::Evict(c) => {
            if states[c].is_owner() {
                actions.push(BusAction::WriteBack { from: c });
            }
            next[c] = Moesi::I;
        }
    }

    check_invariants(&next)?;
    Ok(CoherenceOutcome {
        states: next,
        actions,
        source,
        invalidated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Moesi::*;

    #[test]
    fn cold_read_is_exclusive_from_memory() {
        let out = coherence_step(&[I, I, I, I], CoherenceEvent::CoreRead(0)).unwrap();
        assert_eq!(out.states, vec![E, I, I, I]);
        assert_eq!(out.source, DataSource::Memory);
    }

    #[test]
    fn read_of_modified_block_moves_owner_to_o() {
        let out = coherence_step(&[M, I], CoherenceEvent::CoreRead(1)).unwrap();
        assert_eq!(out.states, vec![O, S]);
        assert_eq!(out.source, DataSource::Cache(0));
        assert!(out.actions.contains(&BusAction::Flush { from: 0 }));
    }

    #[test]
    fn write_to_shared_invalidates_once() {
        let out = coherence_step(&[S, S], CoherenceEvent::CoreWrite(0)).unwrap();
        assert_eq!(out.states, vec![M, I]);
        assert_eq!(out.actions, vec![BusAction::BusUpgr { requester: 0 }]);
        assert_eq!(out.invalidated, vec![1]);
    }

    #[test]
    fn owner_eviction_writes_back() {
        let out = coherence_step(&[O, S], CoherenceEvent::Evict(0)).unwrap();
        assert_eq!(out.states, vec![I, S]);
        assert_eq!(out.actions, vec![BusAction::WriteBack { from: 0 }]);
        let out = coherence_step(&[E, I], CoherenceEvent::Evict(0)).unwrap();
        assert!(out.actions.is_empty());
    }

    #[test]
    fn silent_upgrade_from_exclusive() {
        let out = coherence_step(&[E, I], CoherenceEvent::CoreWrite(0)).unwrap();
        assert_eq!(out.states, vec![M, I]);
        assert!(!out.uses_bus());
    }

    #[test]
    fn invalid_input_is_a_fault() {
        assert!(coherence_step(&[M, S], CoherenceEvent::CoreRead(0)).is_err());
        assert!(coherence_step(&[O, O], CoherenceEvent::CoreRead(0)).is_err());
        assert!(coherence_step(&[I, I], CoherenceEvent::CoreRead(2)).is_err());
    }

    #[test]
    fn snoop_events_leave_requester_alone() {
        let out = coherence_step(&[M, I, I], CoherenceEvent::SnoopBusRd(1)).unwrap();
        assert_eq!(out.states, vec![O, I, I]);
        let out = coherence_step(&[S, S, O], CoherenceEvent::SnoopBusRdX(0)).unwrap();
        assert_eq!(out.states, vec![S, I, I]);
    }

    /// Single-block model with per-cache data, checked against a flat
    /// sequential memory.
    #[derive(Debug, Clone)]
    enum Op {
        Read(usize),
        Write(usize),
        Evict(usize),
    }

    fn op_strategy(caches: usize) -> impl Strategy<Value = Op> {
        (0..3u8, 0..caches).prop_map(|(k, c)| match k {
            0 => Op::Read(c),
            1 => Op::Write(c),
            _ => Op::Evict(c),
        })
    }

    proptest! {
        #[test]
        fn protocol_matches_sequential_memory(ops in proptest::collection::vec(op_strategy(4), 1..300)) {
            let mut states = vec![I; 4];
            let mut data = [0u64; 4];
            let mut memory = 0u64;
            let mut oracle = 0u64;
            for (step, op) in ops.iter().enumerate() {
                let value = step as u64 + 1;
                let event = match op {
                    Op::Read(c) => CoherenceEvent::CoreRead(*c),
                    Op::Write(c) => CoherenceEvent::CoreWrite(*c),
                    Op::Evict(c) => CoherenceEvent::Evict(*c),
                };
                let out = coherence_step(&states, event).unwrap();
                for a in &out.actions {
                    if let BusAction::WriteBack { from } = a {
                        memory = data[*from];
                    }
                }
                match op {
                    Op::Read(c) | Op::Write(c) => {
                        match out.source {
                            DataSource::Local => {}
                            DataSource::Memory => data[*c] = memory,
                            DataSource::Cache(o) => data[*c] = data[o],
                        }
                        if let Op::Read(_) = op {
                            prop_assert_eq!(data[*c], oracle);
                        } else {
                            data[*c] = value;
                            oracle = value;
                        }
                    }
                    Op::Evict(_) => {}
                }
                states = out.states;
                check_invariants(&states).unwrap();
                // a valid copy always holds the latest value
                for (i, s) in states.iter().enumerate() {
                    if s.is_valid() {
                        prop_assert_eq!(data[i], oracle);
                    }
                }
                if !states.iter().any(|s| s.is_owner()) {
                    prop_assert_eq!(memory, oracle);
                }
            }
        }
    }
}
