//! Discrete-event engine: integer-nanosecond clock, ordered event queue and
//! seeded per-purpose random streams.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time in integer nanoseconds since run start.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    /// Rounds to the nearest nanosecond; negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_nan() || secs <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((secs * 1e9).round() as u64)
    }

    pub fn from_micros_f64(us: f64) -> Self {
        Self::from_secs_f64(us * 1e-6)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn times(self, k: u64) -> SimTime {
        SimTime(self.0 * k)
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

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}us", self.as_micros_f64())
    }
}

/// Node identifier used as the event target.
pub type NodeId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event<K> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub kind: K,
}

struct Queued<K>(Event<K>);

impl<K> PartialEq for Queued<K> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.fire_at, self.0.seq) == (other.0.fire_at, other.0.seq)
    }
}
impl<K> Eq for Queued<K> {}
impl<K> PartialOrd for Queued<K> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<K> Ord for Queued<K> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.0.fire_at, self.0.seq).cmp(&(other.0.fire_at, other.0.seq))
    }
}

/// Event queue with a virtual clock. Events dispatch in `(fire_at, seq)`
/// order; `seq` is the insertion counter.
pub struct Scheduler<K> {
    now: SimTime,
    next_seq: u64,
    dispatched: u64,
    heap: BinaryHeap<Reverse<Queued<K>>>,
}

impl<K> Default for Scheduler<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> Scheduler<K> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            dispatched: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, fire_at: SimTime, target: NodeId, kind: K) -> Result<u64, SimError> {
        if fire_at < self.now {
            return Err(SimError::ScheduleInPast {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Queued(Event {
            fire_at,
            seq,
            target,
            kind,
        })));
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, target: NodeId, kind: K) -> u64 {
        let at = self.now + delay;
        // cannot be in the past
        self.schedule(at, target, kind).expect("relative schedule")
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(q)| q.0.fire_at)
    }

    /// Pops the next event if it fires at or before `end`, advancing the clock.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Event<K>> {
        match self.peek_time() {
            Some(t) if t <= end => {
                let Reverse(Queued(ev)) = self.heap.pop()?;
                self.now = ev.fire_at;
                self.dispatched += 1;
                Some(ev)
            }
            _ => None,
        }
    }

    /// Dispatches every event with `fire_at <= end` to `handler`, then sets
    /// the clock to `end`. Returns the number of events dispatched.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Scheduler<K>, Event<K>),
    {
        let start = self.dispatched;
        while let Some(ev) = self.pop_until(end) {
            handler(self, ev);
        }
        if self.now < end {
            self.now = end;
        }
        self.dispatched - start
    }
}

/// Purposes for which a node draws random numbers. Each (node, purpose)
/// pair gets its own stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamPurpose {
    Backoff = 1,
    SensorNoise = 2,
    Traffic = 3,
    Discovery = 4,
    Direction = 5,
    Mobility = 6,
    Experiment = 7,
}

/// Deterministic random stream keyed by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn for_node(seed: u64, node: NodeId, purpose: StreamPurpose) -> Self {
        Self::new(seed, ((node as u64) << 8) | purpose as u64)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.random_range(0..n)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let n: f64 = self.rng.sample(rand_distr::StandardNormal);
        n * sigma
    }

    pub fn exponential(&mut self, mean: f64) -> f64 {
        let u = 1.0 - self.unit();
        -mean * u.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn earlier_time_dispatches_first() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_nanos(5), 0, "five").unwrap();
        s.schedule(SimTime::from_nanos(3), 0, "three").unwrap();
        let mut order = Vec::new();
        s.run_until(SimTime::from_nanos(10), |_, ev| order.push(ev.kind));
        assert_eq!(order, vec!["three", "five"]);
    }

    #[test]
    fn ties_break_by_insertion() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_nanos(7), 0, 'A').unwrap();
        s.schedule(SimTime::from_nanos(7), 0, 'B').unwrap();
        let mut order = Vec::new();
        s.run_until(SimTime::from_nanos(7), |_, ev| order.push(ev.kind));
        assert_eq!(order, vec!['A', 'B']);
    }

    #[test]
    fn scheduling_into_past_is_rejected() {
        let mut s: Scheduler<()> = Scheduler::new();
        s.run_until(SimTime::from_nanos(4), |_, _| {});
        let err = s.schedule(SimTime::from_nanos(2), 0, ()).unwrap_err();
        assert_eq!(
            err,
            SimError::ScheduleInPast {
                at: SimTime::from_nanos(2),
                now: SimTime::from_nanos(4)
            }
        );
    }

    #[test]
    fn empty_queue_advances_clock_to_end() {
        let mut s: Scheduler<()> = Scheduler::new();
        let n = s.run_until(SimTime::from_millis(1000), |_, _| {});
        assert_eq!(n, 0);
        assert_eq!(s.now(), SimTime::from_millis(1000));
    }

    #[test]
    fn events_after_end_stay_queued() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_millis(500), 1, ()).unwrap();
        s.schedule(SimTime::from_millis(1500), 1, ()).unwrap();
        assert_eq!(s.run_until(SimTime::from_millis(1000), |_, _| {}), 1);
        assert_eq!(s.pending(), 1);
    }

    #[test]
    fn handler_can_schedule_followups() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::ZERO, 0, 0u32).unwrap();
        let mut seen = Vec::new();
        s.run_until(SimTime::from_nanos(100), |sch, ev| {
            seen.push(ev.fire_at.as_nanos());
            if ev.kind < 3 {
                sch.schedule_in(SimTime::from_nanos(10), 0, ev.kind + 1);
            }
        });
        assert_eq!(seen, vec![0, 10, 20, 30]);
    }

    #[test]
    fn streams_are_reproducible_and_independent() {
        let mut a = RngStream::for_node(7, 3, StreamPurpose::Backoff);
        let mut b = RngStream::for_node(7, 3, StreamPurpose::Backoff);
        let mut c = RngStream::for_node(7, 4, StreamPurpose::Backoff);
        let xs: Vec<u64> = (0..32).map(|_| a.below(1000)).collect();
        let ys: Vec<u64> = (0..32).map(|_| b.below(1000)).collect();
        let zs: Vec<u64> = (0..32).map(|_| c.below(1000)).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn time_conversions() {
        assert_eq!(SimTime::from_micros(50).as_nanos(), 50_000);
        assert_eq!(SimTime::from_secs_f64(1.5), SimTime::from_millis(1500));
        assert_eq!(SimTime::from_secs_f64(-1.0), SimTime::ZERO);
    }
}
