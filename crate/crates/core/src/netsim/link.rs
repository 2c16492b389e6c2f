use std::collections::VecDeque;

use crate::time::SimTime;

pub const DEFAULT_QUEUE_PKTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub a: usize,
    pub b: usize,
    /// Bits per second in each direction; infinite means no serialization.
    pub bandwidth_bps: f64,
    pub latency: SimTime,
    pub queue_pkts: usize,
}

impl LinkSpec {
    pub fn new(a: usize, b: usize, bandwidth_bps: f64, latency: SimTime) -> Self {
        LinkSpec {
            a,
            b,
            bandwidth_bps,
            latency,
            queue_pkts: DEFAULT_QUEUE_PKTS,
        }
    }
}

/// Outcome of handing a packet to one link direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transmit {
    /// Serialization occupies `[start, departure)`; delivery at `arrival`.
    Sent {
        start: SimTime,
        departure: SimTime,
        arrival: SimTime,
    },
    QueueFull,
    Down,
}

/// One direction of a point-to-point link with a drop-tail FIFO.
#[derive(Debug, Clone)]
pub struct Direction {
    bandwidth_bps: f64,
    latency: SimTime,
    capacity: usize,
    last_departure: SimTime,
    /// Departure times of packets still queued or being serialized.
    pending: VecDeque<SimTime>,
}

impl Direction {
    pub fn new(spec: &LinkSpec) -> Self {
        Direction {
            bandwidth_bps: spec.bandwidth_bps,
            latency: spec.latency,
            capacity: spec.queue_pkts.max(1),
            last_departure: SimTime::ZERO,
            pending: VecDeque::new(),
        }
    }

    pub fn backlog(&mut self, now: SimTime) -> usize {
        while self.pending.front().is_some_and(|&d| d <= now) {
            self.pending.pop_front();
        }
        self.pending.len()
    }

    pub fn serialization(&self, bytes: u32) -> SimTime {
        if self.bandwidth_bps.is_infinite() {
            SimTime::ZERO
        } else {
            // rounded up so a link never runs faster than its bandwidth
            SimTime((8e9 * bytes as f64 / self.bandwidth_bps).ceil() as u64)
        }
    }

    pub fn transmit(&mut self, now: SimTime, bytes: u32, up: bool) -> Transmit {
        if !up {
            return Transmit::Down;
        }
        if self.backlog(now) >= self.capacity {
            return Transmit::QueueFull;
        }
        let start = now.max(self.last_departure);
        let departure = start + self.serialization(bytes);
        self.last_departure = departure;
        self.pending.push_back(departure);
        Transmit::Sent {
            start,
            departure,
            arrival: departure + self.latency,
        }
    }

    /// Forgets everything queued, as when the link goes down.
    pub fn flush(&mut self, now: SimTime) {
        self.pending.clear();
        self.last_departure = now;
    }
}
