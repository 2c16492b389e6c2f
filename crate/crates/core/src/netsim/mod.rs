//! Discrete-event engine: a clock, an event heap ordered by
//! (time, insertion order), point-to-point links and the node state
//! machines they connect.

mod link;
mod topology;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::fib::Fib;
use crate::forwarder::{Router, RouterCounters};
use crate::metrics::{DirSeries, FlowSeries, LinkSeries, MetricsReport, PathSample, PathSeries, RouterSeries};
use crate::mpccp::{Consumer, Output, Timer};
use crate::names::{ContentName, Data, FaceId, FlowName, Interest, Nack, NackReason, Packet, Tag};
use crate::time::SimTime;

pub use link::{Direction, LinkSpec, Transmit, DEFAULT_QUEUE_PKTS};
pub use topology::{FlowSpec, NodeKind, NodeSpec, Route, Topology, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("event at {at} is before the current time {now}")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("no link {0}")]
    UnknownLink(usize),
    #[error("node {0} has no flow {1}")]
    UnknownFlow(usize, usize),
    #[error("node {0} is not a router")]
    NotRouter(usize),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptAction {
    LinkDown(usize),
    LinkUp(usize),
    StartFlow { node: usize, flow: usize },
    StopFlow { node: usize, flow: usize },
    /// Loads a router's configured preseed into its content store.
    Preseed(usize),
}

/// Serves every sequence below the catalogued packet count of a flow.
#[derive(Debug, Clone)]
pub struct Producer {
    catalog: Vec<(FlowName, u64)>,
    payload: u32,
    served: u64,
}

impl Producer {
    pub fn new(catalog: Vec<(FlowName, u64)>, payload: u32) -> Self {
        Producer {
            catalog,
            payload,
            served: 0,
        }
    }

    pub fn served(&self) -> u64 {
        self.served
    }

    pub fn respond(&mut self, interest: &Interest) -> Packet {
        let flow = interest.name.flow_name();
        let known = interest.name.sequence().ok().is_some_and(|seq| {
            self.catalog
                .iter()
                .any(|(f, count)| *f == flow && seq < *count)
        });
        if !known {
            return Packet::Nack(Nack {
                name: interest.name.clone(),
                reason: NackReason::NoRoute,
            });
        }
        self.served += 1;
        let mut data = Data::new(interest.name.clone(), self.payload);
        if interest.probe {
            data.tag = Some(Tag::new());
        }
        Packet::Data(data)
    }
}

#[derive(Debug)]
enum Node {
    Router(Box<Router>),
    Consumer(Vec<Consumer>),
    Producer(Producer),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Interest,
    Data,
    Nack,
}

impl PacketKind {
    fn of(p: &Packet) -> Self {
        match p {
            Packet::Interest(_) => PacketKind::Interest,
            Packet::Data(_) => PacketKind::Data,
            Packet::Nack(_) => PacketKind::Nack,
        }
    }
}

/// One packet handed to a face, recorded when tracing is on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopRecord {
    pub time: SimTime,
    pub node: usize,
    pub in_face: Option<FaceId>,
    pub out_face: FaceId,
    pub kind: PacketKind,
    pub name: ContentName,
    pub probe: bool,
    pub tag: Option<Tag>,
}

#[derive(Debug)]
enum EventKind {
    Arrival { link: usize, dir: usize, epoch: u32, packet: Packet },
    Timer { node: usize, flow: usize, timer: Timer },
    Script(ScriptAction),
}

#[derive(Debug)]
struct Event {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Debug)]
struct LinkState {
    spec: LinkSpec,
    dirs: [Direction; 2],
    /// Face of this link at endpoint a and at endpoint b.
    faces: [FaceId; 2],
    up: bool,
    epoch: u32,
}

#[derive(Debug, Default)]
struct PathRec {
    first_bucket: usize,
    last_bits: u64,
    samples: Vec<PathSample>,
}

#[derive(Debug)]
struct FlowRec {
    node: usize,
    local: usize,
    last_bits: u64,
    goodput: Vec<f64>,
    paths: Vec<PathRec>,
}

#[derive(Debug)]
struct Recorder {
    interval: SimTime,
    next_boundary: SimTime,
    bucket: usize,
    links: Vec<[DirSeries; 2]>,
    flows: Vec<FlowRec>,
    routers: Vec<(usize, Vec<RouterCounters>)>,
}

fn bucket_of(t: SimTime, interval: SimTime) -> usize {
    (t.0 / interval.0) as usize
}

fn add_at<T: Default + Clone + std::ops::AddAssign>(v: &mut Vec<T>, i: usize, x: T) {
    if v.len() <= i {
        v.resize(i + 1, T::default());
    }
    v[i] += x;
}

impl Recorder {
    /// Spreads `bits` over the buckets overlapping `[start, end)`.
    fn add_bits(&self, series: &mut Vec<f64>, start: SimTime, end: SimTime, bits: f64) {
        let iv = self.interval.0;
        if end <= start {
            add_at(series, bucket_of(start, self.interval), bits);
            return;
        }
        let span = (end.0 - start.0) as f64;
        let mut t = start.0;
        while t < end.0 {
            let b = t / iv;
            let stop = ((b + 1) * iv).min(end.0);
            add_at(series, b as usize, bits * (stop - t) as f64 / span);
            t = stop;
        }
    }
}

#[derive(Debug)]
pub struct Simulation {
    now: SimTime,
    horizon: SimTime,
    heap: BinaryHeap<Event>,
    next_seq: u64,
    labels: Vec<String>,
    nodes: Vec<Node>,
    /// Per node, per face: (link, outgoing direction).
    faces: Vec<Vec<(usize, usize)>>,
    links: Vec<LinkState>,
    rec: Recorder,
    trace: Option<Vec<HopRecord>>,
    events: u64,
    preseeds: Vec<Vec<ContentName>>,
    payload: u32,
}

impl Simulation {
    pub fn new(topo: &Topology, metrics_interval: SimTime) -> Result<Self, SimError> {
        topo.validate()?;
        assert!(metrics_interval > SimTime::ZERO, "metrics interval must be positive");
        let faces: Vec<Vec<(usize, usize)>> = (0..topo.nodes.len())
            .map(|n| {
                topo.faces(n)
                    .into_iter()
                    .map(|(l, _)| (l, if topo.links[l].a == n { 0 } else { 1 }))
                    .collect()
            })
            .collect();
        let links: Vec<LinkState> = topo
            .links
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let face_at = |n: usize| faces[n].iter().position(|&(l, _)| l == i).unwrap() as FaceId;
                LinkState {
                    spec: spec.clone(),
                    dirs: [Direction::new(spec), Direction::new(spec)],
                    faces: [face_at(spec.a), face_at(spec.b)],
                    up: true,
                    epoch: 0,
                }
            })
            .collect();

        let mut nodes = Vec::with_capacity(topo.nodes.len());
        let mut flows = Vec::new();
        let mut routers = Vec::new();
        let mut starts = Vec::new();
        let mut preseeds = vec![Vec::new(); topo.nodes.len()];
        for (n, spec) in topo.nodes.iter().enumerate() {
            nodes.push(match &spec.kind {
                NodeKind::Router {
                    config,
                    routes,
                    preseed,
                    preseed_at,
                } => {
                    let mut fib = Fib::new();
                    for r in routes {
                        let mut hops: Vec<FaceId> = Vec::new();
                        for &h in &r.next_hops {
                            hops.extend(topo.faces_toward(n, h));
                        }
                        fib.insert(r.prefix.clone(), hops).expect("validated route");
                    }
                    let router = Router::new(faces[n].len(), fib, config);
                    if !preseed.is_empty() {
                        preseeds[n] = preseed.clone();
                        starts.push((*preseed_at, ScriptAction::Preseed(n)));
                    }
                    routers.push((n, Vec::new()));
                    Node::Router(Box::new(router))
                }
                NodeKind::Consumer { flows: specs } => {
                    let mut list = Vec::new();
                    for (k, f) in specs.iter().enumerate() {
                        list.push(Consumer::new(f.config.clone(), f.seed));
                        flows.push(FlowRec {
                            node: n,
                            local: k,
                            last_bits: 0,
                            goodput: Vec::new(),
                            paths: Vec::new(),
                        });
                        starts.push((f.start, ScriptAction::StartFlow { node: n, flow: k }));
                        if let Some(stop) = f.stop {
                            starts.push((stop, ScriptAction::StopFlow { node: n, flow: k }));
                        }
                    }
                    Node::Consumer(list)
                }
                NodeKind::Producer { catalog } => Node::Producer(Producer::new(catalog.clone(), topo.payload_bytes)),
            });
        }
        let rec = Recorder {
            interval: metrics_interval,
            next_boundary: metrics_interval,
            bucket: 0,
            links: topo
                .links
                .iter()
                .map(|l| {
                    [
                        DirSeries {
                            from: l.a,
                            to: l.b,
                            ..Default::default()
                        },
                        DirSeries {
                            from: l.b,
                            to: l.a,
                            ..Default::default()
                        },
                    ]
                })
                .collect(),
            flows,
            routers,
        };
        let mut sim = Simulation {
            now: SimTime::ZERO,
            horizon: SimTime::ZERO,
            heap: BinaryHeap::new(),
            next_seq: 0,
            labels: topo.nodes.iter().map(|n| n.label.clone()).collect(),
            nodes,
            faces,
            links,
            rec,
            trace: None,
            events: 0,
            preseeds,
            payload: topo.payload_bytes,
        };
        for (at, action) in starts {
            sim.schedule(at, action)?;
        }
        Ok(sim)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn events_processed(&self) -> u64 {
        self.events
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[HopRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn router(&self, node: usize) -> Option<&Router> {
        match self.nodes.get(node)? {
            Node::Router(r) => Some(r),
            _ => None,
        }
    }

    pub fn consumer(&self, node: usize, flow: usize) -> Option<&Consumer> {
        match self.nodes.get(node)? {
            Node::Consumer(list) => list.get(flow),
            _ => None,
        }
    }

    pub fn producer(&self, node: usize) -> Option<&Producer> {
        match self.nodes.get(node)? {
            Node::Producer(p) => Some(p),
            _ => None,
        }
    }

    pub fn link_up(&self, link: usize) -> bool {
        self.links[link].up
    }

    fn push(&mut self, time: SimTime, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    pub fn schedule(&mut self, at: SimTime, action: ScriptAction) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::PastEvent { at, now: self.now });
        }
        match &action {
            ScriptAction::LinkDown(l) | ScriptAction::LinkUp(l) if *l >= self.links.len() => {
                return Err(SimError::UnknownLink(*l));
            }
            ScriptAction::StartFlow { node, flow } | ScriptAction::StopFlow { node, flow }
                if self.consumer(*node, *flow).is_none() =>
            {
                return Err(SimError::UnknownFlow(*node, *flow));
            }
            ScriptAction::Preseed(n) if self.router(*n).is_none() => {
                return Err(SimError::NotRouter(*n));
            }
            _ => {}
        }
        self.push(at, EventKind::Script(action));
        Ok(())
    }

    /// Executes every event with time ≤ `until`, then stops the clock at
    /// `until`. Returns early when the heap runs dry.
    pub fn run(&mut self, until: SimTime) {
        while let Some(ev) = self.heap.peek() {
            if ev.time > until {
                break;
            }
            let ev = self.heap.pop().unwrap();
            self.sample_until(ev.time);
            self.now = ev.time;
            self.events += 1;
            self.dispatch(ev.kind);
        }
        self.sample_until(until);
        self.now = self.now.max(until);
        self.horizon = self.horizon.max(until);
    }

    fn sample_until(&mut self, t: SimTime) {
        while self.rec.next_boundary <= t {
            self.sample();
            self.rec.bucket += 1;
            self.rec.next_boundary += self.rec.interval;
        }
    }

    fn sample(&mut self) {
        let bucket = self.rec.bucket;
        for f in &mut self.rec.flows {
            let Node::Consumer(list) = &self.nodes[f.node] else {
                unreachable!()
            };
            let c = &list[f.local];
            let bits = c.stats().delivered_bits;
            f.goodput.push((bits - f.last_bits) as f64);
            f.last_bits = bits;
            for (i, p) in c.paths().iter().enumerate() {
                if i >= f.paths.len() {
                    f.paths.push(PathRec {
                        first_bucket: bucket,
                        ..Default::default()
                    });
                }
                let r = &mut f.paths[i];
                r.samples.push(PathSample {
                    status: p.status,
                    phase: p.phase,
                    cwnd: p.cwnd,
                    srtt: p.rtt.srtt,
                    inflight: p.inflight,
                    bits: (p.delivered_bits - r.last_bits) as f64,
                });
                r.last_bits = p.delivered_bits;
            }
        }
        for (n, samples) in &mut self.rec.routers {
            let Node::Router(r) = &self.nodes[*n] else {
                unreachable!()
            };
            samples.push(r.counters());
        }
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::Arrival {
                link,
                dir,
                epoch,
                packet,
            } => {
                let l = &self.links[link];
                if epoch != l.epoch {
                    return;
                }
                let (to, face) = if dir == 0 {
                    (l.spec.b, l.faces[1])
                } else {
                    (l.spec.a, l.faces[0])
                };
                self.deliver(to, face, packet);
            }
            EventKind::Timer { node, flow, timer } => {
                let now = self.now;
                let out = match &mut self.nodes[node] {
                    Node::Consumer(list) => list[flow].on_timer(now, timer),
                    _ => unreachable!(),
                };
                self.consumer_outputs(node, flow, out);
            }
            EventKind::Script(action) => self.script(action),
        }
    }

    fn script(&mut self, action: ScriptAction) {
        let now = self.now;
        match action {
            ScriptAction::LinkDown(l) => {
                let link = &mut self.links[l];
                if !link.up {
                    return;
                }
                link.up = false;
                link.epoch += 1;
                for d in &mut link.dirs {
                    d.flush(now);
                }
                let ends = [(link.spec.a, link.faces[0]), (link.spec.b, link.faces[1])];
                for (node, face) in ends {
                    if let Node::Router(r) = &mut self.nodes[node] {
                        let out = r.on_link_down(now, face);
                        for s in out {
                            self.send(node, Some(face), s.face, s.packet);
                        }
                    }
                }
            }
            ScriptAction::LinkUp(l) => {
                let link = &mut self.links[l];
                link.up = true;
                let ends = [(link.spec.a, link.faces[0]), (link.spec.b, link.faces[1])];
                for (node, face) in ends {
                    if let Node::Router(r) = &mut self.nodes[node] {
                        r.on_link_up(face);
                    }
                }
            }
            ScriptAction::StartFlow { node, flow } => {
                let out = match &mut self.nodes[node] {
                    Node::Consumer(list) => list[flow].start(now),
                    _ => unreachable!(),
                };
                self.consumer_outputs(node, flow, out);
            }
            ScriptAction::StopFlow { node, flow } => {
                if let Node::Consumer(list) = &mut self.nodes[node] {
                    list[flow].stop(now);
                }
            }
            ScriptAction::Preseed(node) => {
                let names = std::mem::take(&mut self.preseeds[node]);
                if let Node::Router(r) = &mut self.nodes[node] {
                    for name in names {
                        r.cs_mut().preseed(Data::new(name, self.payload));
                    }
                }
            }
        }
    }

    fn deliver(&mut self, node: usize, face: FaceId, packet: Packet) {
        let now = self.now;
        match &mut self.nodes[node] {
            Node::Router(r) => {
                let out = r.on_packet(now, face, packet);
                for s in out {
                    self.send(node, Some(face), s.face, s.packet);
                }
            }
            Node::Producer(p) => {
                if let Packet::Interest(i) = &packet {
                    let reply = p.respond(i);
                    self.send(node, Some(face), face, reply);
                }
            }
            Node::Consumer(list) => {
                let name = packet.name();
                let Some(k) = list.iter().position(|c| name.has_prefix(&c.config().flow)) else {
                    return;
                };
                let out = match &packet {
                    Packet::Data(d) => list[k].on_data(now, d),
                    Packet::Nack(n) => list[k].on_nack(now, n),
                    Packet::Interest(_) => return,
                };
                self.consumer_outputs(node, k, out);
            }
        }
    }

    fn consumer_outputs(&mut self, node: usize, flow: usize, out: Vec<Output>) {
        for o in out {
            match o {
                Output::Interest(i) => self.send(node, None, 0, Packet::Interest(i)),
                Output::Timer { at, timer } => {
                    let at = at.max(self.now);
                    self.push(at, EventKind::Timer { node, flow, timer });
                }
            }
        }
    }

    fn send(&mut self, node: usize, in_face: Option<FaceId>, face: FaceId, packet: Packet) {
        let now = self.now;
        if let Some(trace) = &mut self.trace {
            let (probe, tag) = match &packet {
                Packet::Interest(i) => (i.probe, i.tag.clone()),
                Packet::Data(d) => (d.tag.is_some(), d.tag.clone()),
                Packet::Nack(_) => (false, None),
            };
            trace.push(HopRecord {
                time: now,
                node,
                in_face,
                out_face: face,
                kind: PacketKind::of(&packet),
                name: packet.name().clone(),
                probe,
                tag,
            });
        }
        let (link, dir) = self.faces[node][face as usize];
        let bytes = packet.wire_bytes();
        let l = &mut self.links[link];
        match l.dirs[dir].transmit(now, bytes, l.up) {
            Transmit::Sent {
                start,
                departure,
                arrival,
            } => {
                let bits = 8.0 * bytes as f64;
                let epoch = l.epoch;
                let is_data = matches!(packet, Packet::Data(_));
                let mut series = std::mem::take(&mut self.rec.links[link][dir]);
                self.rec.add_bits(&mut series.bits, start, departure, bits);
                if is_data {
                    self.rec.add_bits(&mut series.data_bits, start, departure, bits);
                }
                self.rec.links[link][dir] = series;
                self.push(
                    arrival,
                    EventKind::Arrival {
                        link,
                        dir,
                        epoch,
                        packet,
                    },
                );
            }
            Transmit::QueueFull | Transmit::Down => {
                let b = bucket_of(now, self.rec.interval);
                add_at(&mut self.rec.links[link][dir].drops, b, 1);
            }
        }
    }

    /// Snapshot of everything measured so far.
    pub fn report(&self, warmup: f64) -> MetricsReport {
        let buckets = self.rec.bucket;
        let pad_f = |v: &Vec<f64>| {
            let mut v = v.clone();
            v.resize(buckets, 0.0);
            v
        };
        let links = self
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let dir = |k: usize| {
                    let s = &self.rec.links[i][k];
                    let mut drops = s.drops.clone();
                    drops.resize(buckets, 0);
                    DirSeries {
                        from: s.from,
                        to: s.to,
                        data_bits: pad_f(&s.data_bits),
                        bits: pad_f(&s.bits),
                        drops,
                    }
                };
                LinkSeries {
                    id: i,
                    a: l.spec.a,
                    b: l.spec.b,
                    bandwidth_bps: l.spec.bandwidth_bps,
                    dirs: [dir(0), dir(1)],
                }
            })
            .collect();
        let flows = self
            .rec
            .flows
            .iter()
            .map(|f| {
                let c = self.consumer(f.node, f.local).unwrap();
                FlowSeries {
                    node: f.node,
                    flow: c.config().flow.to_string(),
                    goodput_bits: f.goodput.clone(),
                    paths: f
                        .paths
                        .iter()
                        .enumerate()
                        .map(|(i, p)| PathSeries {
                            id: i,
                            tag: c.paths()[i].tag.clone(),
                            first_bucket: p.first_bucket,
                            samples: p.samples.clone(),
                        })
                        .collect(),
                    phase_log: c.phase_log().to_vec(),
                    snapshots: c.snapshots().to_vec(),
                    stats: c.stats(),
                    finished_at: c.finished_at(),
                }
            })
            .collect();
        let routers = self
            .rec
            .routers
            .iter()
            .map(|(n, samples)| {
                let r = self.router(*n).unwrap();
                RouterSeries {
                    node: *n,
                    samples: samples.clone(),
                    fab: r.fab_stats(),
                    cs_len: r.cs().len(),
                    preseeded_total: r.cs().preseeded_total(),
                    preseeded_served: r.cs().preseeded_served(),
                    last_preseed_hit: r.cs().last_preseed_hit().map(SimTime::as_secs_f64),
                }
            })
            .collect();
        MetricsReport {
            interval: self.rec.interval.as_secs_f64(),
            duration: self.horizon.as_secs_f64(),
            warmup,
            node_labels: self.labels.clone(),
            links,
            flows,
            routers,
        }
    }
}
