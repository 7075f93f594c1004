//! Discrete-event core: virtual clock, priority event queue with FIFO
//! tie-breaking, cancellation, and named counter-based random streams.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::format;
use alloc::string::{String, ToString};
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Mul, Sub};

use crate::node::NodeId;

/// Virtual time in whole microseconds since the start of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond. Negative and NaN inputs map to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime::ZERO;
        }
        SimTime((s * 1e6 + 0.5) as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// A scheduled occurrence addressed to one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<K> {
    pub fire_at: SimTime,
    /// Insertion counter; breaks ties between events at the same instant.
    pub seq: u64,
    pub target: NodeId,
    pub kind: K,
}

/// Cancellation handle returned by [`Engine::schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub events_processed: u64,
    pub final_clock: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("engine: cannot schedule at {at}, clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("engine: empty range [{lo}, {hi}] for stream `{stream}`")]
    EmptyRange { stream: String, lo: i64, hi: i64 },
    #[error("engine: handler failed on event #{seq} {event} for {target} at {at}: {message}")]
    Handler {
        at: SimTime,
        seq: u64,
        target: NodeId,
        event: String,
        message: String,
    },
}

/// Receives events popped by [`Engine::run_until`].
pub trait Handler<K> {
    type Error: fmt::Display;

    fn handle(&mut self, engine: &mut Engine<K>, event: &Event<K>) -> Result<(), Self::Error>;
}

struct Queued<K>(Event<K>);

impl<K> PartialEq for Queued<K> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<K> Eq for Queued<K> {}

impl<K> PartialOrd for Queued<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Queued<K> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

/// Single-threaded event scheduler.
pub struct Engine<K> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<K>>,
    live: BTreeSet<u64>,
    processed: u64,
}

impl<K> Default for Engine<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> Engine<K> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            live: BTreeSet::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of scheduled, not yet delivered and not cancelled events.
    pub fn pending(&self) -> usize {
        self.live.len()
    }

    /// Total events delivered over the engine's lifetime.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        target: NodeId,
        kind: K,
    ) -> Result<EventHandle, EngineError> {
        if fire_at < self.now {
            return Err(EngineError::ScheduleInPast {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.live.insert(seq);
        self.queue.push(Queued(Event {
            fire_at,
            seq,
            target,
            kind,
        }));
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(
        &mut self,
        delay: SimTime,
        target: NodeId,
        kind: K,
    ) -> Result<EventHandle, EngineError> {
        self.schedule(self.now + delay, target, kind)
    }

    /// Returns false if the event was already delivered or cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.live.remove(&handle.0)
    }

    fn pop_due(&mut self, t_end: SimTime) -> Option<Event<K>> {
        loop {
            let top = self.queue.peek()?;
            if !self.live.contains(&top.0.seq) {
                self.queue.pop();
                continue;
            }
            if top.0.fire_at > t_end {
                return None;
            }
            let Queued(ev) = self.queue.pop()?;
            self.live.remove(&ev.seq);
            return Some(ev);
        }
    }

    /// Delivers every event with `fire_at <= t_end` in (time, seq) order, then
    /// advances the clock to `t_end`.
    pub fn run_until<H>(&mut self, t_end: SimTime, handler: &mut H) -> Result<RunSummary, EngineError>
    where
        H: Handler<K>,
        K: fmt::Debug,
    {
        let mut count = 0;
        while let Some(ev) = self.pop_due(t_end) {
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            self.processed += 1;
            count += 1;
            if let Err(e) = handler.handle(self, &ev) {
                return Err(EngineError::Handler {
                    at: ev.fire_at,
                    seq: ev.seq,
                    target: ev.target,
                    event: format!("{:?}", ev.kind),
                    message: e.to_string(),
                });
            }
        }
        if t_end > self.now {
            self.now = t_end;
        }
        Ok(RunSummary {
            events_processed: count,
            final_clock: self.now,
        })
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Named pseudo-random stream.
///
/// Output `i` is `mix64(key + i * gamma)` (SplitMix64) where `key` is derived
/// from the run seed and the stream name, so the sequence depends only on
/// `(seed, name, number of draws)` and is identical on every platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    name: String,
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, name: &str) -> Self {
        let key = mix64(seed ^ mix64(fnv1a(name.as_bytes())));
        RngStream {
            name: name.to_string(),
            key,
            counter: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of 64-bit words drawn so far.
    pub fn draws(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Unbiased uniform integer on the closed range `[lo, hi]`.
    pub fn uniform(&mut self, lo: i64, hi: i64) -> Result<i64, EngineError> {
        if lo > hi {
            return Err(EngineError::EmptyRange {
                stream: self.name.clone(),
                lo,
                hi,
            });
        }
        let span = (hi as i128 - lo as i128 + 1) as u128;
        if span > u64::MAX as u128 {
            return Ok(self.next_u64() as i64);
        }
        let span = span as u64;
        // Reject the low `2^64 mod span` values so every residue is equally likely.
        let threshold = span.wrapping_neg() % span;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return Ok((lo as i128 + (x % span) as i128) as i64);
            }
        }
    }

    /// Uniform draw on `[0, 1)` with 53 bits of precision.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
