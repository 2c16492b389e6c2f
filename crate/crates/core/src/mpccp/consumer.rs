//! Consumer flow state machine. Inputs are packets and timer expiries,
//! outputs are Interests to send and timers to arm; the caller owns time.

use std::collections::{HashMap, VecDeque};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::names::{Data, FlowName, Interest, Nack, Tag};
use crate::time::SimTime;

use super::law::{self, RttScaling};
use super::path::{Path, PathStatus, Phase, SendRecord, WindowParams};
use super::select::{self, Candidate, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub flow: FlowName,
    pub total_packets: u64,
    /// N: most paths in use at once.
    pub max_paths: usize,
    /// T: seconds between path selection rounds.
    pub switch_period: f64,
    pub probe_rate: f64,
    pub probe_timeout: f64,
    pub beta: f64,
    pub window: WindowParams,
    pub strategy: Strategy,
    /// W: window length of the latency-variance strategy.
    pub variance_window: usize,
    pub two_packet_loss: bool,
    pub rtt_scaling: RttScaling,
    /// Fixed reference RTT; the smallest in-use RTT when unset.
    pub rtt_reference: Option<f64>,
    pub bw_gain: f64,
    pub bw_interval: f64,
}

impl FlowConfig {
    pub fn new(flow: FlowName, total_packets: u64) -> Self {
        FlowConfig {
            flow,
            total_packets,
            max_paths: 10,
            switch_period: 10.0,
            probe_rate: 10.0,
            probe_timeout: 4.0,
            beta: 0.75,
            window: WindowParams::default(),
            strategy: Strategy::Bandwidth,
            variance_window: 10,
            two_packet_loss: false,
            rtt_scaling: RttScaling::PathOverReference,
            rtt_reference: None,
            bw_gain: 0.3,
            bw_interval: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Timer {
    Rto { seq: u64, send_id: u64 },
    ProbeTimeout { seq: u64, send_id: u64 },
    Probe { epoch: u32 },
    Select { epoch: u32 },
    Bandwidth { epoch: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Interest(Interest),
    Timer { at: SimTime, timer: Timer },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Owner {
    Nobody,
    Path(usize),
    Probe,
}

#[derive(Debug, Clone, Copy)]
struct SeqState {
    owner: Owner,
    send_id: u64,
    sent_at: f64,
    sent: bool,
    retransmitted: bool,
    outstanding: bool,
    queued: bool,
    received: bool,
}

impl Default for SeqState {
    fn default() -> Self {
        SeqState {
            owner: Owner::Nobody,
            send_id: 0,
            sent_at: 0.0,
            sent: false,
            retransmitted: false,
            outstanding: false,
            queued: false,
            received: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseChange {
    pub time: f64,
    pub path: usize,
    pub from: Phase,
    pub to: Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSnapshot {
    pub time: f64,
    pub path: usize,
    pub tag: Tag,
    pub status: PathStatus,
    pub bandwidth: f64,
    pub srtt: Option<f64>,
    pub cwnd: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowStats {
    pub interests: u64,
    pub probes: u64,
    pub retransmissions: u64,
    pub loss_events: u64,
    pub timeouts: u64,
    pub nacks: u64,
    pub paths_disabled: u64,
    pub duplicates: u64,
    pub stale: u64,
    pub producer_data: u64,
    pub cache_data: u64,
    pub received: u64,
    pub delivered_bits: u64,
}

#[derive(Debug)]
pub struct Consumer {
    cfg: FlowConfig,
    paths: Vec<Path>,
    by_tag: HashMap<Tag, usize>,
    seqs: Vec<SeqState>,
    next_seq: u64,
    orphans: VecDeque<u64>,
    next_send_id: u64,
    spread: usize,
    rng: ChaCha8Rng,
    active: bool,
    epoch: u32,
    finished_at: Option<f64>,
    phase_log: Vec<PhaseChange>,
    reset_log: Vec<(f64, usize)>,
    snapshots: Vec<PathSnapshot>,
    stats: FlowStats,
}

fn secs(t: SimTime) -> f64 {
    t.as_secs_f64()
}

fn at(t: f64) -> SimTime {
    SimTime::from_secs_f64(t.max(0.0))
}

impl Consumer {
    pub fn new(cfg: FlowConfig, seed: u64) -> Self {
        assert!(cfg.max_paths > 0, "max_paths must be positive");
        assert!(cfg.probe_rate > 0.0, "probe_rate must be positive");
        Consumer {
            cfg,
            paths: Vec::new(),
            by_tag: HashMap::new(),
            seqs: Vec::new(),
            next_seq: 0,
            orphans: VecDeque::new(),
            next_send_id: 0,
            spread: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            active: false,
            epoch: 0,
            finished_at: None,
            phase_log: Vec::new(),
            reset_log: Vec::new(),
            snapshots: Vec::new(),
            stats: FlowStats::default(),
        }
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn stats(&self) -> FlowStats {
        self.stats
    }

    pub fn phase_log(&self) -> &[PhaseChange] {
        &self.phase_log
    }

    /// Times at which a re-probed disabled path got fresh state.
    pub fn reset_log(&self) -> &[(f64, usize)] {
        &self.reset_log
    }

    pub fn snapshots(&self) -> &[PathSnapshot] {
        &self.snapshots
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn finished_at(&self) -> Option<f64> {
        self.finished_at
    }

    pub fn is_complete(&self) -> bool {
        self.stats.received >= self.cfg.total_packets
    }

    pub fn is_received(&self, seq: u64) -> bool {
        self.seqs.get(seq as usize).is_some_and(|s| s.received)
    }

    pub fn in_use(&self) -> impl Iterator<Item = usize> + '_ {
        self.paths
            .iter()
            .enumerate()
            .filter(|(_, p)| p.status == PathStatus::InUse)
            .map(|(i, _)| i)
    }

    fn in_use_count(&self) -> usize {
        self.in_use().count()
    }

    /// Registers a path without probing for it.
    pub fn add_path(&mut self, tag: Tag) -> usize {
        if let Some(&p) = self.by_tag.get(&tag) {
            return p;
        }
        let status = if self.in_use_count() < self.cfg.max_paths {
            PathStatus::InUse
        } else {
            PathStatus::Unused
        };
        let p = self.paths.len();
        self.paths.push(Path::new(tag.clone(), status, &self.cfg.window));
        self.by_tag.insert(tag, p);
        p
    }

    #[cfg(test)]
    pub(crate) fn path_mut(&mut self, p: usize) -> &mut Path {
        &mut self.paths[p]
    }

    pub fn start(&mut self, now: SimTime) -> Vec<Output> {
        if self.active || self.is_complete() {
            return Vec::new();
        }
        self.active = true;
        self.epoch += 1;
        let t = secs(now);
        let epoch = self.epoch;
        let mut out = vec![
            Output::Timer {
                at: at(t + self.cfg.switch_period),
                timer: Timer::Select { epoch },
            },
            Output::Timer {
                at: at(t + self.cfg.bw_interval),
                timer: Timer::Bandwidth { epoch },
            },
        ];
        out.extend(self.fill(t));
        out.extend(self.probe_tick(t));
        out
    }

    pub fn stop(&mut self, _now: SimTime) {
        self.active = false;
    }

    pub fn on_timer(&mut self, now: SimTime, timer: Timer) -> Vec<Output> {
        let t = secs(now);
        let periodic = match timer {
            Timer::Probe { epoch } | Timer::Select { epoch } | Timer::Bandwidth { epoch } => Some(epoch),
            _ => None,
        };
        if let Some(epoch) = periodic {
            if !self.active || epoch != self.epoch {
                return Vec::new();
            }
        }
        let mut out = match timer {
            Timer::Rto { seq, send_id } => {
                self.on_rto(t, seq, send_id);
                Vec::new()
            }
            Timer::ProbeTimeout { seq, send_id } => {
                let st = &mut self.seqs[seq as usize];
                if st.owner == Owner::Probe && st.send_id == send_id && st.outstanding && !st.received {
                    st.outstanding = false;
                    self.orphan(seq);
                }
                Vec::new()
            }
            Timer::Probe { .. } => self.probe_tick(t),
            Timer::Select { epoch } => {
                self.select_paths(t);
                vec![Output::Timer {
                    at: at(t + self.cfg.switch_period),
                    timer: Timer::Select { epoch },
                }]
            }
            Timer::Bandwidth { epoch } => {
                let g = self.cfg.bw_gain;
                let dt = self.cfg.bw_interval;
                for p in &mut self.paths {
                    p.bandwidth = g * p.bucket_bits / dt + (1.0 - g) * p.bandwidth;
                    p.bucket_bits = 0.0;
                }
                vec![Output::Timer {
                    at: at(t + dt),
                    timer: Timer::Bandwidth { epoch },
                }]
            }
        };
        out.extend(self.fill(t));
        out
    }

    fn probe_tick(&mut self, t: f64) -> Vec<Output> {
        let mut out = Vec::with_capacity(3);
        if let Some(seq) = self.next_orphan().or_else(|| self.fresh_seq()) {
            let id = self.new_send_id();
            let st = &mut self.seqs[seq as usize];
            st.retransmitted |= st.sent;
            st.sent = true;
            st.owner = Owner::Probe;
            st.send_id = id;
            st.sent_at = t;
            st.outstanding = true;
            self.stats.probes += 1;
            out.push(Output::Interest(Interest::probe(self.cfg.flow.packet(seq))));
            out.push(Output::Timer {
                at: at(t + self.cfg.probe_timeout),
                timer: Timer::ProbeTimeout { seq, send_id: id },
            });
        }
        if !self.is_complete() {
            out.push(Output::Timer {
                at: at(t + 1.0 / self.cfg.probe_rate),
                timer: Timer::Probe { epoch: self.epoch },
            });
        }
        out
    }

    fn new_send_id(&mut self) -> u64 {
        self.next_send_id += 1;
        self.next_send_id
    }

    fn fresh_seq(&mut self) -> Option<u64> {
        if self.next_seq >= self.cfg.total_packets {
            return None;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.seqs.push(SeqState::default());
        Some(seq)
    }

    fn next_orphan(&mut self) -> Option<u64> {
        while let Some(seq) = self.orphans.pop_front() {
            let st = &mut self.seqs[seq as usize];
            if st.queued && st.owner == Owner::Nobody && !st.received {
                st.queued = false;
                return Some(seq);
            }
        }
        None
    }

    fn next_retransmit(&mut self, p: usize) -> Option<u64> {
        while let Some(seq) = self.paths[p].retransmit.pop_front() {
            let st = &mut self.seqs[seq as usize];
            if st.queued && st.owner == Owner::Path(p) && !st.received {
                st.queued = false;
                return Some(seq);
            }
        }
        None
    }

    fn orphan(&mut self, seq: u64) {
        let st = &mut self.seqs[seq as usize];
        st.owner = Owner::Nobody;
        st.queued = true;
        self.orphans.push_back(seq);
    }

    /// Queues `seq` for retransmission on `p` if it is in use, otherwise
    /// on the next in-use path in rotation.
    fn requeue(&mut self, seq: u64, p: usize) {
        let target = if self.paths[p].status == PathStatus::InUse {
            Some(p)
        } else {
            let live: Vec<usize> = self.in_use().collect();
            if live.is_empty() {
                None
            } else {
                self.spread = self.spread.wrapping_add(1);
                Some(live[self.spread % live.len()])
            }
        };
        match target {
            Some(q) => {
                let st = &mut self.seqs[seq as usize];
                st.owner = Owner::Path(q);
                st.queued = true;
                self.paths[q].retransmit.push_back(seq);
            }
            None => self.orphan(seq),
        }
    }

    fn fill(&mut self, t: f64) -> Vec<Output> {
        let mut out = Vec::new();
        if !self.active {
            return out;
        }
        for p in 0..self.paths.len() {
            while self.paths[p].can_send() {
                let Some(seq) = self
                    .next_retransmit(p)
                    .or_else(|| self.next_orphan())
                    .or_else(|| self.fresh_seq())
                else {
                    break;
                };
                let id = self.new_send_id();
                let st = &mut self.seqs[seq as usize];
                if st.sent {
                    st.retransmitted = true;
                    self.stats.retransmissions += 1;
                }
                st.sent = true;
                st.owner = Owner::Path(p);
                st.send_id = id;
                st.sent_at = t;
                st.outstanding = true;
                let path = &mut self.paths[p];
                let index = path.next_index;
                path.next_index += 1;
                path.send_queue.push_back(SendRecord {
                    index,
                    seq,
                    sent_at: t,
                    rcv: false,
                });
                path.inflight += 1;
                self.stats.interests += 1;
                out.push(Output::Interest(Interest::tagged(self.cfg.flow.packet(seq), path.tag.clone())));
                out.push(Output::Timer {
                    at: at(t + path.rtt.rto),
                    timer: Timer::Rto { seq, send_id: id },
                });
            }
        }
        out
    }

    fn set_phase(&mut self, t: f64, p: usize, to: Phase) {
        let from = self.paths[p].phase;
        if from != to {
            self.paths[p].phase = to;
            self.phase_log.push(PhaseChange { time: t, path: p, from, to });
        }
    }

    /// Linked increase for `p` over the in-use set (plus `p` itself).
    fn additive_increase(&mut self, p: usize) {
        let mut members: Vec<usize> = self.in_use().collect();
        if !members.contains(&p) {
            members.push(p);
        }
        let cwnds: Vec<f64> = members.iter().map(|&i| self.paths[i].cwnd).collect();
        let rtts: Vec<f64> = members.iter().map(|&i| self.paths[i].rtt_estimate()).collect();
        let rtt_mu = self
            .cfg
            .rtt_reference
            .unwrap_or_else(|| rtts.iter().copied().fold(f64::INFINITY, f64::min));
        let k = members.iter().position(|&i| i == p).unwrap();
        let ratio = self.cfg.rtt_scaling.ratio(rtts[k], rtt_mu);
        self.paths[p].cwnd += law::increment(&cwnds, &rtts, k, ratio);
    }

    fn decrease(&mut self, p: usize) {
        let w = &self.cfg.window;
        let path = &mut self.paths[p];
        path.cwnd = law::decrease(path.cwnd, self.cfg.beta, w.cwnd_min);
    }

    /// Marks the record of an outstanding `seq` received on its path.
    /// Returns the path and the record if there was one.
    fn settle(&mut self, seq: u64) -> Option<(usize, SendRecord)> {
        let st = self.seqs[seq as usize];
        let Owner::Path(p) = st.owner else {
            return None;
        };
        if !st.outstanding {
            return None;
        }
        let path = &mut self.paths[p];
        let pos = path.position(seq)?;
        let rec = &mut path.send_queue[pos];
        rec.rcv = true;
        let rec = *rec;
        path.inflight -= 1;
        Some((p, rec))
    }

    pub fn on_data(&mut self, now: SimTime, data: &Data) -> Vec<Output> {
        let t = secs(now);
        let seq = match data.name.sequence() {
            Ok(s) if data.name.has_prefix(&self.cfg.flow) && (s as usize) < self.seqs.len() => s,
            _ => {
                self.stats.stale += 1;
                return Vec::new();
            }
        };
        if let Some(tag) = &data.tag {
            self.on_probe_data(t, seq, tag);
        }
        if self.seqs[seq as usize].received {
            self.stats.duplicates += 1;
            return self.fill(t);
        }

        let st = self.seqs[seq as usize];
        let settled = self.settle(seq);
        {
            let st = &mut self.seqs[seq as usize];
            st.received = true;
            st.outstanding = false;
            st.queued = false;
        }
        let bits = data.payload_size as u64 * 8;
        self.stats.received += 1;
        self.stats.delivered_bits += bits;
        if data.from_intermediate {
            self.stats.cache_data += 1;
        } else {
            self.stats.producer_data += 1;
        }
        let credited = match st.owner {
            Owner::Path(p) => Some(p),
            _ => data.tag.as_ref().and_then(|tag| self.by_tag.get(tag).copied()),
        };
        if let Some(p) = credited {
            let path = &mut self.paths[p];
            path.bucket_bits += bits as f64;
            path.delivered_bits += bits;
            path.delivered_packets += 1;
        }

        if let Some((p, rec)) = settled {
            if data.tag.is_none() && self.paths[p].status != PathStatus::Disabled {
                self.window_update(t, p, rec, data.from_intermediate, st.retransmitted);
            }
            self.paths[p].trim();
        }

        if self.is_complete() && self.finished_at.is_none() {
            self.finished_at = Some(t);
            self.active = false;
        }
        self.fill(t)
    }

    fn window_update(&mut self, t: f64, p: usize, rec: SendRecord, from_cache: bool, ambiguous: bool) {
        if self.paths[p].phase == Phase::FastRecovery {
            self.paths[p].recovery_acks += 1;
        }
        if from_cache {
            self.additive_increase(p);
        } else {
            if !ambiguous {
                self.paths[p].rtt.sample(t - rec.sent_at);
            }
            match self.paths[p].phase {
                Phase::SlowStart => self.paths[p].cwnd += 1.0,
                _ => self.additive_increase(p),
            }
        }
        if self.paths[p].phase == Phase::SlowStart && self.paths[p].cwnd >= self.paths[p].ssthresh {
            self.set_phase(t, p, Phase::CongestionAvoidance);
        }

        let mut lost = Vec::new();
        if !from_cache && !ambiguous {
            let path = &mut self.paths[p];
            let bound = if self.cfg.two_packet_loss {
                let prev = path.last_producer_index.replace(rec.index);
                prev.map(|i| i.min(rec.index))
            } else {
                Some(rec.index)
            };
            if let Some(bound) = bound {
                lost = path
                    .send_queue
                    .iter()
                    .take_while(|r| r.index < bound)
                    .filter(|r| !r.rcv)
                    .map(|r| r.seq)
                    .collect();
            }
        }
        if !lost.is_empty() {
            self.on_loss(t, p, &lost);
        } else if self.paths[p].phase == Phase::FastRecovery
            && self.paths[p].recovery_acks as f64 >= self.paths[p].cwnd_bk
        {
            self.set_phase(t, p, Phase::CongestionAvoidance);
        }
    }

    fn on_loss(&mut self, t: f64, p: usize, lost: &[u64]) {
        {
            let path = &mut self.paths[p];
            path.send_queue.retain(|r| r.rcv || !lost.contains(&r.seq));
            path.inflight -= lost.len();
            path.losses += lost.len() as u64;
        }
        for &seq in lost {
            let st = &mut self.seqs[seq as usize];
            st.outstanding = false;
            st.retransmitted = true;
            self.requeue(seq, p);
        }
        self.stats.loss_events += 1;
        let path = &self.paths[p];
        match path.phase {
            Phase::FastRecovery if (path.recovery_acks as f64) < path.cwnd_bk => {
                let path = &mut self.paths[p];
                path.cwnd = path.cwnd_bk;
                path.recovery_acks = 0;
            }
            _ => {
                self.decrease(p);
                let path = &mut self.paths[p];
                path.cwnd_bk = path.cwnd;
                path.recovery_acks = 0;
                self.set_phase(t, p, Phase::FastRecovery);
            }
        }
    }

    fn on_rto(&mut self, t: f64, seq: u64, send_id: u64) {
        let st = self.seqs[seq as usize];
        if st.received || !st.outstanding || st.send_id != send_id {
            return;
        }
        let Owner::Path(p) = st.owner else {
            return;
        };
        let Some(pos) = self.paths[p].position(seq) else {
            return;
        };
        let rec = self.paths[p].send_queue.remove(pos).expect("record at position");
        {
            let path = &mut self.paths[p];
            path.inflight -= 1;
            path.timeouts += 1;
            path.trim();
        }
        self.stats.timeouts += 1;
        let st = &mut self.seqs[seq as usize];
        st.outstanding = false;
        st.retransmitted = true;
        let path = &self.paths[p];
        if path.status != PathStatus::Disabled && rec.sent_at >= path.last_timeout_at {
            let cwnd_min = self.cfg.window.cwnd_min;
            let path = &mut self.paths[p];
            path.ssthresh = (path.cwnd / 2.0).max(cwnd_min);
            path.cwnd = cwnd_min;
            path.recovery_acks = 0;
            path.last_producer_index = None;
            path.last_timeout_at = t;
            path.rtt.backoff();
            self.set_phase(t, p, Phase::SlowStart);
        }
        self.requeue(seq, p);
    }

    pub fn on_nack(&mut self, now: SimTime, nack: &Nack) -> Vec<Output> {
        let t = secs(now);
        self.stats.nacks += 1;
        let seq = match nack.name.sequence() {
            Ok(s) if nack.name.has_prefix(&self.cfg.flow) && (s as usize) < self.seqs.len() => s,
            _ => return Vec::new(),
        };
        let st = self.seqs[seq as usize];
        if st.received {
            return Vec::new();
        }
        match st.owner {
            Owner::Probe if st.outstanding => {
                self.seqs[seq as usize].outstanding = false;
                self.orphan(seq);
            }
            Owner::Path(p) if (st.outstanding || st.queued) && self.paths[p].status != PathStatus::Disabled => {
                self.disable(p);
            }
            _ => {}
        }
        self.fill(t)
    }

    fn disable(&mut self, p: usize) {
        self.stats.paths_disabled += 1;
        let mut pending: Vec<u64> = Vec::new();
        {
            let path = &mut self.paths[p];
            path.status = PathStatus::Disabled;
            pending.extend(path.send_queue.drain(..).filter(|r| !r.rcv).map(|r| r.seq));
            pending.extend(path.retransmit.drain(..));
            path.inflight = 0;
        }
        let unused: Vec<usize> = self
            .paths
            .iter()
            .enumerate()
            .filter(|(_, q)| q.status == PathStatus::Unused)
            .map(|(i, _)| i)
            .collect();
        if let Some(&q) = unused.choose(&mut self.rng) {
            self.paths[q].status = PathStatus::InUse;
        }
        for seq in pending {
            let st = &mut self.seqs[seq as usize];
            if st.received || st.owner != Owner::Path(p) {
                continue;
            }
            st.outstanding = false;
            st.retransmitted |= st.sent;
            self.requeue(seq, p);
        }
    }

    fn on_probe_data(&mut self, t: f64, seq: u64, tag: &Tag) {
        let in_use = self.in_use_count();
        let status = if in_use < self.cfg.max_paths {
            PathStatus::InUse
        } else {
            PathStatus::Unused
        };
        let p = match self.by_tag.get(tag) {
            Some(&p) => {
                if self.paths[p].status == PathStatus::Disabled {
                    let w = self.cfg.window;
                    self.paths[p].status = status;
                    self.paths[p].reset(&w);
                    self.reset_log.push((t, p));
                }
                p
            }
            None => self.add_path(tag.clone()),
        };
        let st = &mut self.seqs[seq as usize];
        if st.owner == Owner::Probe && st.outstanding {
            let sample = t - st.sent_at;
            st.outstanding = false;
            let path = &mut self.paths[p];
            path.probe_rtt = Some(match path.probe_rtt {
                Some(avg) => 0.875 * avg + 0.125 * sample,
                None => sample,
            });
        }
    }

    fn select_paths(&mut self, t: f64) {
        let cands: Vec<Candidate> = self
            .paths
            .iter()
            .enumerate()
            .filter(|(_, p)| p.status != PathStatus::Disabled)
            .map(|(id, p)| Candidate {
                id,
                in_use: p.status == PathStatus::InUse,
                bandwidth: p.bandwidth,
                hops: p.hops(),
                latency: p.probe_rtt.or(p.rtt.srtt),
            })
            .collect();
        if !cands.is_empty() {
            let chosen = select::select(
                self.cfg.strategy,
                &cands,
                self.cfg.max_paths,
                self.cfg.variance_window,
                &mut self.rng,
            );
            let mut demoted = Vec::new();
            for c in &cands {
                let want = chosen.contains(&c.id);
                let path = &mut self.paths[c.id];
                if want {
                    path.status = PathStatus::InUse;
                } else if path.status == PathStatus::InUse {
                    path.status = PathStatus::Unused;
                    demoted.push(c.id);
                }
            }
            for p in demoted {
                let queued: Vec<u64> = self.paths[p].retransmit.drain(..).collect();
                for seq in queued {
                    let st = self.seqs[seq as usize];
                    if st.queued && st.owner == Owner::Path(p) && !st.received {
                        self.requeue(seq, p);
                    }
                }
            }
        }
        for (i, p) in self.paths.iter().enumerate() {
            self.snapshots.push(PathSnapshot {
                time: t,
                path: i,
                tag: p.tag.clone(),
                status: p.status,
                bandwidth: p.bandwidth,
                srtt: p.rtt.srtt,
                cwnd: p.cwnd,
            });
        }
    }

    /// Cross-checks per-path accounting against per-sequence state.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut outstanding = vec![0usize; self.paths.len()];
        for (seq, st) in self.seqs.iter().enumerate() {
            if st.outstanding {
                if let Owner::Path(p) = st.owner {
                    outstanding[p] += 1;
                    if self.paths[p].position(seq as u64).is_none() {
                        return Err(format!("seq {seq} outstanding on path {p} without a record"));
                    }
                }
            }
        }
        for (i, p) in self.paths.iter().enumerate() {
            p.check_invariants(self.cfg.window.cwnd_min)
                .map_err(|e| format!("path {i}: {e}"))?;
            if p.inflight != outstanding[i] {
                return Err(format!(
                    "path {i}: inflight {} but {} sequences bound",
                    p.inflight, outstanding[i]
                ));
            }
        }
        if self.in_use_count() > self.cfg.max_paths {
            return Err("more paths in use than allowed".into());
        }
        Ok(())
    }
}
