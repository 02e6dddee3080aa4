//! Deterministic discrete-event kernel: a future-event list ordered by
//! (time, insertion sequence) and named random-number streams.
//!
//! Randomness is pinned to ChaCha8 keyed from a 64-bit seed (expanded by the
//! `rand_core` `seed_from_u64` contract, which is value-stable) with the
//! 64-bit stream id selecting the ChaCha stream counter. Identical
//! `(seed, stream_id)` pairs reproduce identical variate sequences on every
//! platform; that determinism is part of the external contract.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("cannot schedule at {time}: clock is already at {clock}")]
    PastEvent { time: f64, clock: f64 },
    #[error("rate must be positive and finite, got {rate}")]
    NonPositiveRate { rate: f64 },
}

/// A scheduled occurrence: timestamp, tie-break sequence, and payload.
#[derive(Debug, Clone)]
pub struct Event<K> {
    pub time: f64,
    pub seq: u64,
    pub kind: K,
}

// Ordering is reversed so the max-heap pops the earliest (time, seq) first.
// (time, seq) pairs are unique and times are non-NaN by `schedule`.
impl<K> PartialEq for Event<K> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq && self.time.total_cmp(&other.time) == Ordering::Equal
    }
}

impl<K> Eq for Event<K> {}

impl<K> PartialOrd for Event<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Event<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Future-event list with a simulation clock. Ties at equal timestamps pop
/// in insertion order.
#[derive(Debug)]
pub struct EventQueue<K> {
    heap: BinaryHeap<Event<K>>,
    clock: f64,
    next_seq: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            clock: 0.0,
            next_seq: 0,
        }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Insert an event at `time >= clock`. Returns its tie-break sequence.
    pub fn schedule(&mut self, time: f64, kind: K) -> Result<u64, EngineError> {
        if !time.is_finite() || time < self.clock {
            return Err(EngineError::PastEvent {
                time,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
        Ok(seq)
    }

    /// Pop the next event if it occurs at or before `t_end`, advancing the
    /// clock to its timestamp.
    pub fn pop_next_within(&mut self, t_end: f64) -> Option<Event<K>> {
        if self.heap.peek().is_some_and(|e| e.time <= t_end) {
            let event = self.heap.pop().expect("peeked");
            self.clock = event.time;
            Some(event)
        } else {
            None
        }
    }

    /// Handle events in (time, sequence) order until the queue empties or the
    /// next event lies beyond `t_end`. The clock ends at the last handled
    /// event's time (or stays put if nothing fires). Returns the final clock.
    pub fn run_until<F>(&mut self, t_end: f64, mut handler: F) -> f64
    where
        F: FnMut(&mut Self, Event<K>),
    {
        while let Some(event) = self.pop_next_within(t_end) {
            handler(self, event);
        }
        self.clock
    }
}

/// A named, reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { rng }
    }

    /// Uniform variate strictly inside (0, 1), from the top 53 bits of one
    /// 64-bit draw. Endpoints are excluded so logarithms stay finite.
    pub fn uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform variate on [lo, hi].
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Exponential variate by inverse transform: `-ln(u) / rate`. One draw
    /// per call, so variate counts per event stay fixed. Never returns zero
    /// or infinity.
    pub fn sample_exponential(&mut self, rate: f64) -> Result<f64, EngineError> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(EngineError::NonPositiveRate { rate });
        }
        Ok(-self.uniform().ln() / rate)
    }
}

/// What a stream is for; part of the stream-id namespace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Interarrival = 1,
    Service = 2,
    PropagationInbound = 3,
    PropagationOutbound = 4,
    SessionPattern = 5,
}

/// Pack (purpose, replication, entity) into a stream id. Every simulation
/// entity draws from its own stream so replications and entities never
/// contaminate each other's variate sequences.
pub fn stream_id(purpose: StreamPurpose, replication: u32, entity: u32) -> u64 {
    ((purpose as u64) << 56) | ((replication as u64) << 24) | (entity as u64 & 0xff_ffff)
}
