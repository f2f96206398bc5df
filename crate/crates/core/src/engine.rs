//! Discrete-event kernel.
//!
//! Time is an unsigned picosecond count. Events are ordered by `(time, seq)`
//! where `seq` is the insertion counter, so equal-time events dispatch in the
//! order they were scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Simulated time in picoseconds.
pub type Ps = u64;

pub type ComponentId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("event scheduled at {at} ps but the clock is already at {now} ps")]
    PastEvent { at: Ps, now: Ps },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<P> {
    pub time: Ps,
    pub seq: u64,
    pub target: ComponentId,
    pub payload: P,
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.time, self.0.seq) == (other.0.time, other.0.seq)
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub dispatched: u64,
    pub last_time: Ps,
}

pub struct EventQueue<P> {
    heap: BinaryHeap<Entry<P>>,
    now: Ps,
    next_seq: u64,
    dispatched: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: 0,
            next_seq: 0,
            dispatched: 0,
        }
    }

    pub fn now(&self) -> Ps {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Total events dispatched since creation.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Enqueues `payload` for `target` at absolute time `time`.
    pub fn schedule(
        &mut self,
        time: Ps,
        target: ComponentId,
        payload: P,
    ) -> Result<u64, EngineError> {
        if time < self.now {
            return Err(EngineError::PastEvent {
                at: time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event {
            time,
            seq,
            target,
            payload,
        }));
        Ok(seq)
    }

    /// Time of the earliest pending event.
    pub fn peek_time(&self) -> Option<Ps> {
        self.heap.peek().map(|e| e.0.time)
    }

    /// Removes the earliest event if it is due at or before `t_end`, and
    /// advances the clock to it.
    pub fn pop_until(&mut self, t_end: Ps) -> Option<Event<P>> {
        if self.peek_time()? > t_end {
            return None;
        }
        let ev = self.heap.pop()?.0;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        self.dispatched += 1;
        Some(ev)
    }

    /// Dispatches every event with `time <= t_end` in `(time, seq)` order.
    /// The handler may schedule further events through the queue it is given.
    pub fn run_until<F>(&mut self, t_end: Ps, mut handler: F) -> RunStats
    where
        F: FnMut(&mut Self, Event<P>),
    {
        let mut stats = RunStats {
            dispatched: 0,
            last_time: self.now,
        };
        while let Some(ev) = self.pop_until(t_end) {
            stats.dispatched += 1;
            stats.last_time = ev.time;
            handler(self, ev);
        }
        stats
    }
}

/// Converts a latency in ns into whole cycles of a clock with period
/// `clock_period` ps, rounding up. The latency is first rounded to the
/// nearest picosecond.
pub fn cycles_for_latency(latency_ns: f64, clock_period: Ps) -> u64 {
    assert!(clock_period > 0, "clock period must be positive");
    let ps = (latency_ns * 1000.0).round().max(0.0) as u64;
    ps.div_ceil(clock_period)
}

/// Rounds `t` up to the next edge of a clock with the given period.
pub fn align_to_clock(t: Ps, period: Ps) -> Ps {
    t.div_ceil(period) * period
}

/// Stable 64-bit id for a named random sub-stream (FNV-1a).
pub fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent generator for the component `name` of a simulation seeded
/// with `seed`. Streams of different names never overlap, so adding a
/// component leaves existing streams untouched.
pub fn component_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}

/// SplitMix64 finalizer, used to derive child seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
