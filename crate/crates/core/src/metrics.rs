//! Time-bucketed measurements of one run and their CSV forms.

use std::fmt::Write;

use crate::fib::FabStats;
use crate::forwarder::RouterCounters;
use crate::mpccp::{FlowStats, PathSnapshot, PathStatus, Phase, PhaseChange};
use crate::names::Tag;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirSeries {
    pub from: usize,
    pub to: usize,
    /// Data packet bits (headers included) serialized per bucket.
    pub data_bits: Vec<f64>,
    /// All packet bits serialized per bucket.
    pub bits: Vec<f64>,
    pub drops: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSeries {
    pub id: usize,
    pub a: usize,
    pub b: usize,
    pub bandwidth_bps: f64,
    /// Index 0 is a→b, index 1 is b→a.
    pub dirs: [DirSeries; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub status: PathStatus,
    pub phase: Phase,
    pub cwnd: f64,
    pub srtt: Option<f64>,
    pub inflight: usize,
    /// Payload bits delivered during the bucket.
    pub bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSeries {
    pub id: usize,
    pub tag: Tag,
    pub first_bucket: usize,
    pub samples: Vec<PathSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSeries {
    pub node: usize,
    pub flow: String,
    /// Payload bits of first-time deliveries per bucket.
    pub goodput_bits: Vec<f64>,
    pub paths: Vec<PathSeries>,
    pub phase_log: Vec<PhaseChange>,
    pub snapshots: Vec<PathSnapshot>,
    pub stats: FlowStats,
    pub finished_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouterSeries {
    pub node: usize,
    /// Cumulative counters sampled at the end of every bucket.
    pub samples: Vec<RouterCounters>,
    pub fab: FabStats,
    pub cs_len: usize,
    pub preseeded_total: u64,
    pub preseeded_served: u64,
    pub last_preseed_hit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub interval: f64,
    pub duration: f64,
    pub warmup: f64,
    pub node_labels: Vec<String>,
    pub links: Vec<LinkSeries>,
    pub flows: Vec<FlowSeries>,
    pub routers: Vec<RouterSeries>,
}

fn fmt_opt(v: Option<f64>, scale: f64) -> String {
    v.map(|x| format!("{:.3}", x * scale)).unwrap_or_default()
}

impl MetricsReport {
    pub fn buckets(&self) -> usize {
        (self.duration / self.interval).round() as usize
    }

    /// Buckets lying entirely inside `[from, to)`.
    pub fn bucket_range(&self, from: f64, to: f64) -> std::ops::Range<usize> {
        let lo = (from / self.interval - 1e-9).ceil().max(0.0) as usize;
        let hi = ((to / self.interval + 1e-9).floor() as usize).min(self.buckets());
        lo..hi.max(lo)
    }

    /// The measurement window: the run minus the warm-up.
    pub fn window(&self) -> (f64, f64) {
        (self.warmup, self.duration)
    }

    pub fn link_by_nodes(&self, from: usize, to: usize) -> Option<(usize, usize)> {
        self.links.iter().find_map(|l| {
            if l.a == from && l.b == to {
                Some((l.id, 0))
            } else if l.b == from && l.a == to {
                Some((l.id, 1))
            } else {
                None
            }
        })
    }

    /// Mean Data rate over `[from, to)` in bits per second.
    pub fn link_throughput(&self, link: usize, dir: usize, from: f64, to: f64) -> f64 {
        let r = self.bucket_range(from, to);
        if r.is_empty() {
            return 0.0;
        }
        let span = r.len() as f64 * self.interval;
        let bits: f64 = self.links[link].dirs[dir].data_bits[r].iter().sum();
        bits / span
    }

    /// Percentage of capacity carried as Data over `[from, to)`.
    pub fn utilization(&self, link: usize, dir: usize, from: f64, to: f64) -> f64 {
        let bw = self.links[link].bandwidth_bps;
        if bw.is_infinite() {
            return 0.0;
        }
        100.0 * self.link_throughput(link, dir, from, to) / bw
    }

    pub fn flow_goodput(&self, flow: usize, from: f64, to: f64) -> f64 {
        let r = self.bucket_range(from, to);
        if r.is_empty() {
            return 0.0;
        }
        let span = r.len() as f64 * self.interval;
        self.flows[flow].goodput_bits[r].iter().sum::<f64>() / span
    }

    pub fn flows_of(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.flows
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.node == node)
            .map(|(i, _)| i)
    }

    pub fn links_csv(&self) -> String {
        let mut s = String::from("t,link_id,from,to,bits,data_bits,drops,utilization_pct\n");
        for b in 0..self.buckets() {
            let t = b as f64 * self.interval;
            for l in &self.links {
                for d in &l.dirs {
                    let util = if l.bandwidth_bps.is_infinite() {
                        0.0
                    } else {
                        100.0 * d.data_bits[b] / (l.bandwidth_bps * self.interval)
                    };
                    writeln!(
                        s,
                        "{:.3},{},{},{},{:.1},{:.1},{},{:.3}",
                        t,
                        l.id,
                        self.node_labels[d.from],
                        self.node_labels[d.to],
                        d.bits[b],
                        d.data_bits[b],
                        d.drops[b],
                        util
                    )
                    .unwrap();
                }
            }
        }
        s
    }

    pub fn flows_csv(&self) -> String {
        let mut s = String::from("t,consumer,flow,goodput_bps\n");
        for b in 0..self.buckets() {
            let t = b as f64 * self.interval;
            for f in &self.flows {
                writeln!(
                    s,
                    "{:.3},{},{},{:.1}",
                    t,
                    self.node_labels[f.node],
                    f.flow,
                    f.goodput_bits[b] / self.interval
                )
                .unwrap();
            }
        }
        s
    }

    pub fn paths_csv(&self) -> String {
        let mut s = String::from("t,consumer,flow,path_id,tag,status,phase,cwnd,srtt_ms,inflight,goodput_bps\n");
        for b in 0..self.buckets() {
            let t = b as f64 * self.interval;
            for f in &self.flows {
                for p in &f.paths {
                    let Some(x) = b.checked_sub(p.first_bucket).and_then(|i| p.samples.get(i)) else {
                        continue;
                    };
                    writeln!(
                        s,
                        "{:.3},{},{},{},{},{},{},{:.4},{},{},{:.1}",
                        t,
                        self.node_labels[f.node],
                        f.flow,
                        p.id,
                        p.tag,
                        x.status,
                        x.phase,
                        x.cwnd,
                        fmt_opt(x.srtt, 1e3),
                        x.inflight,
                        x.bits / self.interval
                    )
                    .unwrap();
                }
            }
        }
        s
    }

    pub fn routers_csv(&self) -> String {
        let mut s = String::from(
            "t,router,interests_in,interests_out,data_in,data_out,cs_hits,nacks_in,nacks_out,aggregated,path_failures,unsolicited,hop_drops\n",
        );
        for b in 0..self.buckets() {
            let t = (b + 1) as f64 * self.interval;
            for r in &self.routers {
                let c = r.samples[b];
                writeln!(
                    s,
                    "{:.3},{},{},{},{},{},{},{},{},{},{},{},{}",
                    t,
                    self.node_labels[r.node],
                    c.interests_in,
                    c.interests_out,
                    c.data_in,
                    c.data_out,
                    c.cs_hits,
                    c.nacks_in,
                    c.nacks_out,
                    c.aggregated,
                    c.path_failures,
                    c.unsolicited,
                    c.hop_drops
                )
                .unwrap();
            }
        }
        s
    }

    /// Human-readable summary over the measurement window.
    pub fn summary(&self) -> String {
        let (from, to) = self.window();
        let mut s = String::new();
        writeln!(s, "window {from:.1}s..{to:.1}s, bucket {:.3}s", self.interval).unwrap();
        writeln!(s, "links (data throughput, utilization):").unwrap();
        for l in &self.links {
            for (k, d) in l.dirs.iter().enumerate() {
                let thr = self.link_throughput(l.id, k, from, to);
                if thr == 0.0 {
                    continue;
                }
                writeln!(
                    s,
                    "  {}->{}: {:.1} Kbps, {:.2}%",
                    self.node_labels[d.from],
                    self.node_labels[d.to],
                    thr / 1e3,
                    self.utilization(l.id, k, from, to)
                )
                .unwrap();
            }
        }
        writeln!(s, "flows (goodput):").unwrap();
        for (i, f) in self.flows.iter().enumerate() {
            writeln!(
                s,
                "  {} {}: {:.1} Kbps, {} paths, {} received, {} losses, {} timeouts",
                self.node_labels[f.node],
                f.flow,
                self.flow_goodput(i, from, to) / 1e3,
                f.paths.len(),
                f.stats.received,
                f.stats.loss_events,
                f.stats.timeouts
            )
            .unwrap();
        }
        writeln!(s, "routers (fab hit rate, cs hits):").unwrap();
        for r in &self.routers {
            let hits = r.samples.last().map(|c| c.cs_hits).unwrap_or(0);
            writeln!(s, "  {}: {:.3}, {}", self.node_labels[r.node], r.fab.hit_rate(), hits).unwrap();
        }
        s
    }
}
