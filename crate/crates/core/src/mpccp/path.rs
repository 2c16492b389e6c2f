use std::collections::VecDeque;
use std::fmt;

use crate::names::Tag;

use super::rtt::RttEstimator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathStatus {
    InUse,
    Unused,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

impl Phase {
    pub fn short(self) -> &'static str {
        match self {
            Phase::SlowStart => "SS",
            Phase::CongestionAvoidance => "CA",
            Phase::FastRecovery => "FR",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl fmt::Display for PathStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathStatus::InUse => "in_use",
            PathStatus::Unused => "unused",
            PathStatus::Disabled => "disabled",
        })
    }
}

/// One Interest in a path's forwarding order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendRecord {
    pub index: u64,
    pub seq: u64,
    pub sent_at: f64,
    pub rcv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowParams {
    pub cwnd_min: f64,
    pub cwnd_init: f64,
    pub ssthresh_init: f64,
    pub initial_rto: f64,
    pub min_rto: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            cwnd_min: 1.0,
            cwnd_init: 2.0,
            ssthresh_init: 64.0,
            initial_rto: super::rtt::INITIAL_RTO,
            min_rto: super::rtt::MIN_RTO,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Path {
    pub tag: Tag,
    pub status: PathStatus,
    pub phase: Phase,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub cwnd_bk: f64,
    pub recovery_acks: u64,
    pub rtt: RttEstimator,
    /// Averaged probe round trips.
    pub probe_rtt: Option<f64>,
    pub inflight: usize,
    pub send_queue: VecDeque<SendRecord>,
    pub retransmit: VecDeque<u64>,
    pub next_index: u64,
    /// Forwarding index of the previous producer arrival, for two-packet
    /// loss detection.
    pub last_producer_index: Option<u64>,
    pub last_timeout_at: f64,
    pub bandwidth: f64,
    pub bucket_bits: f64,
    pub delivered_bits: u64,
    pub delivered_packets: u64,
    pub losses: u64,
    pub timeouts: u64,
}

impl Path {
    pub fn new(tag: Tag, status: PathStatus, w: &WindowParams) -> Self {
        Path {
            tag,
            status,
            phase: Phase::SlowStart,
            cwnd: w.cwnd_init.max(w.cwnd_min),
            ssthresh: w.ssthresh_init,
            cwnd_bk: 0.0,
            recovery_acks: 0,
            rtt: RttEstimator::new(w.initial_rto, w.min_rto),
            probe_rtt: None,
            inflight: 0,
            send_queue: VecDeque::new(),
            retransmit: VecDeque::new(),
            next_index: 0,
            last_producer_index: None,
            last_timeout_at: f64::NEG_INFINITY,
            bandwidth: 0.0,
            bucket_bits: 0.0,
            delivered_bits: 0,
            delivered_packets: 0,
            losses: 0,
            timeouts: 0,
        }
    }

    /// Congestion state back to its initial values; counters survive.
    pub fn reset(&mut self, w: &WindowParams) {
        let fresh = Path::new(self.tag.clone(), self.status, w);
        *self = Path {
            probe_rtt: self.probe_rtt,
            delivered_bits: self.delivered_bits,
            delivered_packets: self.delivered_packets,
            losses: self.losses,
            timeouts: self.timeouts,
            ..fresh
        };
    }

    pub fn hops(&self) -> usize {
        self.tag.len()
    }

    /// RTT used by the window laws: smoothed producer RTT when known,
    /// else the probe average, else the RTO.
    pub fn rtt_estimate(&self) -> f64 {
        self.rtt.srtt.or(self.probe_rtt).unwrap_or(self.rtt.rto)
    }

    pub fn can_send(&self) -> bool {
        self.status == PathStatus::InUse && (self.inflight as f64) < self.cwnd
    }

    pub fn position(&self, seq: u64) -> Option<usize> {
        self.send_queue.iter().position(|r| r.seq == seq)
    }

    /// Drops received records from the front of the forwarding queue.
    pub fn trim(&mut self) {
        while self.send_queue.front().is_some_and(|r| r.rcv) {
            self.send_queue.pop_front();
        }
    }

    pub fn check_invariants(&self, cwnd_min: f64) -> Result<(), String> {
        if self.cwnd < cwnd_min {
            return Err(format!("cwnd {} below minimum", self.cwnd));
        }
        let outstanding = self.send_queue.iter().filter(|r| !r.rcv).count();
        if outstanding != self.inflight {
            return Err(format!("inflight {} but {} outstanding records", self.inflight, outstanding));
        }
        if self.send_queue.iter().zip(self.send_queue.iter().skip(1)).any(|(a, b)| a.index >= b.index) {
            return Err("forwarding queue out of order".into());
        }
        Ok(())
    }
}
