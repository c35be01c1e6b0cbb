//! Event scheduling, the lossy attacker-to-victim channel and the analytic
//! timing of one query/response exchange.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{airtime_us, FrameKind, PhyTiming};

struct Entry<E> {
    at: u64,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // Reversed so the max-heap pops the earliest event, then the earliest
    // insertion among equal timestamps.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Single-threaded discrete-event queue with a monotonic microsecond clock.
pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    now: u64,
    next_seq: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: 0,
            next_seq: 0,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, at: u64, payload: E) -> Result<()> {
        if at < self.now {
            return Err(Error::ScheduleInPast { at, now: self.now });
        }
        self.heap.push(Entry {
            at,
            seq: self.next_seq,
            payload,
        });
        self.next_seq += 1;
        Ok(())
    }

    pub fn schedule_in(&mut self, delay: u64, payload: E) {
        let at = self.now + delay;
        self.heap.push(Entry {
            at,
            seq: self.next_seq,
            payload,
        });
        self.next_seq += 1;
    }

    /// Dispatches every event stamped `<= t_end` in order, then parks the
    /// clock at `t_end`. The handler may schedule further events; those that
    /// fall inside the horizon are dispatched in the same call.
    pub fn run_until<F>(&mut self, t_end: u64, mut handler: F) -> Result<usize>
    where
        F: FnMut(&mut Self, E),
    {
        if t_end < self.now {
            return Err(Error::ClockRewind { t_end, now: self.now });
        }
        let mut dispatched = 0;
        while self.heap.peek().is_some_and(|e| e.at <= t_end) {
            let entry = self.heap.pop().expect("peeked");
            self.now = entry.at;
            handler(self, entry.payload);
            dispatched += 1;
        }
        self.now = t_end;
        Ok(dispatched)
    }
}

/// Piecewise-linear reply probability as a function of attacker distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct ReplyRateTable {
    points: Vec<(f64, f64)>,
}

impl ReplyRateTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::ReplyRateTable("needs at least one breakpoint".into()));
        }
        for (d, p) in &points {
            if !d.is_finite() || *d < 0.0 {
                return Err(Error::ReplyRateTable(format!("bad distance {d}")));
            }
            if !(0.0..=1.0).contains(p) {
                return Err(Error::ReplyRateTable(format!(
                    "probability {p} at {d} m is outside [0, 1]"
                )));
            }
        }
        if let Some(w) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::ReplyRateTable(format!(
                "distances must strictly increase ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(ReplyRateTable { points })
    }

    pub fn constant(p: f64) -> Result<Self> {
        Self::new(vec![(0.0, p)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn probability_at(&self, distance_m: f64) -> f64 {
        let pts = &self.points;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if distance_m <= first.0 {
            return first.1;
        }
        if distance_m >= last.0 {
            return last.1;
        }
        let i = pts.partition_point(|(d, _)| *d <= distance_m);
        let (d0, p0) = pts[i - 1];
        let (d1, p1) = pts[i];
        p0 + (p1 - p0) * (distance_m - d0) / (d1 - d0)
    }
}

impl Default for ReplyRateTable {
    /// Street-range measurements against a camera: 97% at 5 m, nearly all
    /// packets answered out to 100 m, 73% at 150 m. The 10 m and 100 m rows
    /// are approximate, not exact values.
    fn default() -> Self {
        ReplyRateTable {
            points: vec![(5.0, 0.97), (10.0, 0.97), (100.0, 0.95), (150.0, 0.73)],
        }
    }
}

impl TryFrom<Vec<(f64, f64)>> for ReplyRateTable {
    type Error = Error;

    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<ReplyRateTable> for Vec<(f64, f64)> {
    fn from(t: ReplyRateTable) -> Self {
        t.points
    }
}

/// One Bernoulli draw: does a frame sent from `distance_m` get through?
pub fn deliver<R: Rng + ?Sized>(distance_m: f64, table: &ReplyRateTable, rng: &mut R) -> bool {
    let p = table.probability_at(distance_m.max(0.0));
    rng.random::<f64>() < p
}

/// Components of one saturated query/response exchange, in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExchangeTiming {
    pub difs_us: f64,
    pub backoff_us: f64,
    pub query_us: f64,
    pub sifs_us: f64,
    pub response_us: f64,
    pub response_kind: FrameKind,
    pub response_bitrate: f64,
}

impl ExchangeTiming {
    pub fn cycle_us(&self) -> f64 {
        self.difs_us + self.backoff_us + self.query_us + self.sifs_us + self.response_us
    }

    pub fn exchanges_per_s(&self) -> f64 {
        1e6 / self.cycle_us()
    }
}

pub fn exchange_timing(query: FrameKind, bitrate: f64, phy: &PhyTiming) -> Result<ExchangeTiming> {
    let response_kind = query.response().ok_or(Error::NoResponse(query))?;
    let query_us = airtime_us(query, bitrate, phy)?;
    let response_bitrate = phy.response_bitrate(response_kind, bitrate);
    let response_us = airtime_us(response_kind, response_bitrate, phy)?;
    Ok(ExchangeTiming {
        difs_us: phy.difs_us,
        backoff_us: phy.expected_backoff_us(),
        query_us,
        sifs_us: phy.sifs_us,
        response_us,
        response_kind,
        response_bitrate,
    })
}

/// DIFS + mean backoff + query + SIFS + response.
pub fn exchange_cycle_us(query: FrameKind, bitrate: f64, phy: &PhyTiming) -> Result<f64> {
    exchange_timing(query, bitrate, phy).map(|t| t.cycle_us())
}
