//! Per-router forwarding engine: PIT with aggregation, content store,
//! tag-driven forwarding with name-based fallback, probe handling and NACKs.
//!
//! A [`Router`] is a pure state machine. Each handler returns the packets
//! to emit; the simulation engine owns links and timing.

use std::collections::HashMap;

use crate::fib::{resolve, FabStats, FabTable, Fib, DEFAULT_FAB_CAPACITY};
use crate::names::{ContentName, Data, FaceId, FlowName, Interest, Nack, NackReason, Packet};
use crate::time::SimTime;

pub const DEFAULT_CS_CAPACITY: usize = 4096;
pub const DEFAULT_PIT_LIFETIME: SimTime = SimTime(4_000_000_000);

#[derive(Debug, Clone, PartialEq)]
pub struct RouterConfig {
    pub fab_capacity: usize,
    pub cs_capacity: usize,
    pub pit_lifetime: SimTime,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            fab_capacity: DEFAULT_FAB_CAPACITY,
            cs_capacity: DEFAULT_CS_CAPACITY,
            pit_lifetime: DEFAULT_PIT_LIFETIME,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Downstream {
    pub face: FaceId,
    pub aggregated: bool,
    pub arrival: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PitEntry {
    pub name: ContentName,
    pub downstream: Vec<Downstream>,
    /// Face the Interest was forwarded on.
    pub upstream: FaceId,
    pub expiry: SimTime,
}

#[derive(Debug, Clone)]
struct CsItem {
    data: Data,
    preseeded: bool,
}

/// Packet cache with least-recently-used eviction.
#[derive(Debug)]
pub struct ContentStore {
    table: crate::fib::RecencyTable<ContentName, CsItem>,
    preseeded_total: u64,
    preseeded_served: u64,
    last_preseed_hit: Option<SimTime>,
}

impl ContentStore {
    pub fn new(capacity: usize) -> Self {
        ContentStore {
            table: crate::fib::RecencyTable::new(capacity.max(1)),
            preseeded_total: 0,
            preseeded_served: 0,
            last_preseed_hit: None,
        }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.table.capacity()
    }

    pub fn insert(&mut self, data: Data) {
        let name = data.name.clone();
        self.table.insert(name, CsItem { data, preseeded: false });
    }

    /// Caches a packet ahead of time; hits on it are tracked separately.
    pub fn preseed(&mut self, data: Data) {
        let name = data.name.clone();
        if self.table.insert(name, CsItem { data, preseeded: true }).is_none() {
            self.preseeded_total += 1;
        }
    }

    pub fn contains(&self, name: &ContentName) -> bool {
        self.table.contains(name)
    }

    fn lookup(&mut self, now: SimTime, name: &ContentName) -> Option<Data> {
        let item = self.table.get_touch(name)?;
        if item.preseeded {
            // count each preseeded packet once
            item.preseeded = false;
            self.preseeded_served += 1;
            self.last_preseed_hit = Some(now);
        }
        Some(item.data.clone())
    }

    pub fn preseeded_total(&self) -> u64 {
        self.preseeded_total
    }

    pub fn preseeded_served(&self) -> u64 {
        self.preseeded_served
    }

    pub fn last_preseed_hit(&self) -> Option<SimTime> {
        self.last_preseed_hit
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RouterCounters {
    pub interests_in: u64,
    pub interests_out: u64,
    pub data_in: u64,
    pub data_out: u64,
    pub nacks_in: u64,
    pub nacks_out: u64,
    pub cs_hits: u64,
    pub aggregated: u64,
    pub path_failures: u64,
    pub unsolicited: u64,
    pub hop_drops: u64,
}

/// Packet emission requested by a handler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Send {
    pub face: FaceId,
    pub packet: Packet,
}

#[derive(Debug)]
pub struct Router {
    faces_up: Vec<bool>,
    fib: Fib,
    fab: FabTable,
    pit: HashMap<ContentName, PitEntry>,
    cs: ContentStore,
    rr: HashMap<FlowName, usize>,
    pit_lifetime: SimTime,
    counters: RouterCounters,
}

impl Router {
    pub fn new(num_faces: usize, fib: Fib, config: &RouterConfig) -> Self {
        Router {
            faces_up: vec![true; num_faces],
            fib,
            fab: FabTable::new(config.fab_capacity.max(1)),
            pit: HashMap::new(),
            cs: ContentStore::new(config.cs_capacity),
            rr: HashMap::new(),
            pit_lifetime: config.pit_lifetime,
            counters: RouterCounters::default(),
        }
    }

    pub fn fib(&self) -> &Fib {
        &self.fib
    }

    pub fn fib_mut(&mut self) -> &mut Fib {
        &mut self.fib
    }

    pub fn fab(&self) -> &FabTable {
        &self.fab
    }

    pub fn fab_stats(&self) -> FabStats {
        self.fab.stats()
    }

    pub fn cs(&self) -> &ContentStore {
        &self.cs
    }

    pub fn cs_mut(&mut self) -> &mut ContentStore {
        &mut self.cs
    }

    pub fn counters(&self) -> RouterCounters {
        self.counters
    }

    pub fn pit_len(&self) -> usize {
        self.pit.len()
    }

    pub fn pit_entry(&self, name: &ContentName) -> Option<&PitEntry> {
        self.pit.get(name)
    }

    pub fn num_faces(&self) -> usize {
        self.faces_up.len()
    }

    pub fn face_up(&self, face: FaceId) -> bool {
        self.faces_up.get(face as usize).copied().unwrap_or(false)
    }

    fn live_entry(&mut self, now: SimTime, name: &ContentName) -> Option<&mut PitEntry> {
        if self.pit.get(name).is_some_and(|e| e.expiry <= now) {
            self.pit.remove(name);
        }
        self.pit.get_mut(name)
    }

    fn nack(&mut self, face: FaceId, name: ContentName, reason: NackReason) -> Send {
        self.counters.nacks_out += 1;
        Send {
            face,
            packet: Packet::Nack(Nack { name, reason }),
        }
    }

    /// Equal-weight choice among `faces` minus `exclude` and down faces:
    /// a round-robin pointer kept per FIB prefix.
    fn round_robin(&mut self, prefix: &FlowName, faces: &[FaceId], exclude: FaceId) -> Option<FaceId> {
        let eligible: Vec<FaceId> = faces
            .iter()
            .copied()
            .filter(|&f| f != exclude && self.face_up(f))
            .collect();
        if eligible.is_empty() {
            return None;
        }
        let ptr = self.rr.entry(prefix.clone()).or_insert(0);
        let face = eligible[*ptr % eligible.len()];
        *ptr = ptr.wrapping_add(1);
        Some(face)
    }

    pub fn on_interest(&mut self, now: SimTime, in_face: FaceId, mut interest: Interest) -> Vec<Send> {
        self.counters.interests_in += 1;
        if interest.hop_budget == 0 {
            self.counters.hop_drops += 1;
            return Vec::new();
        }
        interest.hop_budget -= 1;

        if !interest.probe {
            if let Some(mut data) = self.cs.lookup(now, &interest.name) {
                self.counters.cs_hits += 1;
                self.counters.data_out += 1;
                data.from_intermediate = true;
                data.tag = None;
                return vec![Send {
                    face: in_face,
                    packet: Packet::Data(data),
                }];
            }
        }

        if let Some(entry) = self.live_entry(now, &interest.name) {
            let already = entry.downstream.iter().any(|d| d.face == in_face);
            if !already {
                entry.downstream.push(Downstream {
                    face: in_face,
                    aggregated: true,
                    arrival: now,
                });
                self.counters.aggregated += 1;
                return Vec::new();
            }
            // same downstream asking again: a retransmission, forward anew
        }

        let Some(entry) = resolve(&self.fib, &mut self.fab, &interest.name) else {
            return vec![self.nack(in_face, interest.name, NackReason::NoRoute)];
        };
        let prefix = entry.prefix.clone();
        let faces = entry.faces.clone();

        let mut out = Vec::with_capacity(2);
        let upstream = match interest.tag.as_mut().filter(|t| !t.is_empty()) {
            Some(tag) => {
                let face = tag.pop().expect("non-empty tag");
                if self.face_up(face) && faces.contains(&face) {
                    Some(face)
                } else {
                    self.counters.path_failures += 1;
                    interest.tag = None;
                    let fallback = self.round_robin(&prefix, &faces, in_face);
                    out.push(self.nack(in_face, interest.name.clone(), NackReason::PathFailure));
                    match fallback {
                        Some(f) => Some(f),
                        None => return out,
                    }
                }
            }
            None => self.round_robin(&prefix, &faces, in_face),
        };
        let Some(upstream) = upstream else {
            return vec![self.nack(in_face, interest.name, NackReason::NoRoute)];
        };

        let expiry = now + self.pit_lifetime;
        let entry = self.pit.entry(interest.name.clone()).or_insert_with(|| PitEntry {
            name: interest.name.clone(),
            downstream: Vec::new(),
            upstream,
            expiry,
        });
        entry.upstream = upstream;
        entry.expiry = expiry;
        if !entry.downstream.iter().any(|d| d.face == in_face) {
            entry.downstream.push(Downstream {
                face: in_face,
                aggregated: false,
                arrival: now,
            });
        }
        self.counters.interests_out += 1;
        out.push(Send {
            face: upstream,
            packet: Packet::Interest(interest),
        });
        out
    }

    pub fn on_data(&mut self, now: SimTime, in_face: FaceId, mut data: Data) -> Vec<Send> {
        self.counters.data_in += 1;
        if self.live_entry(now, &data.name).is_none() {
            self.counters.unsolicited += 1;
            return Vec::new();
        }
        let entry = self.pit.remove(&data.name).expect("live entry");
        match data.tag.as_mut() {
            Some(tag) => tag.push(in_face),
            None => {
                let mut cached = data.clone();
                cached.from_intermediate = false;
                self.cs.insert(cached);
            }
        }
        let mut out = Vec::with_capacity(entry.downstream.len());
        for d in &entry.downstream {
            let mut copy = data.clone();
            copy.from_intermediate = data.from_intermediate || d.aggregated;
            self.counters.data_out += 1;
            out.push(Send {
                face: d.face,
                packet: Packet::Data(copy),
            });
        }
        out
    }

    /// Relays a NACK to every downstream of the matching PIT entry. A
    /// path-failure NACK keeps the entry because the Interest that raised
    /// it was still forwarded on a fallback face.
    pub fn on_nack(&mut self, now: SimTime, _in_face: FaceId, nack: Nack) -> Vec<Send> {
        self.counters.nacks_in += 1;
        let Some(entry) = self.live_entry(now, &nack.name) else {
            return Vec::new();
        };
        let faces: Vec<FaceId> = entry.downstream.iter().map(|d| d.face).collect();
        if nack.reason == NackReason::NoRoute {
            self.pit.remove(&nack.name);
        }
        faces
            .into_iter()
            .map(|face| self.nack(face, nack.name.clone(), nack.reason))
            .collect()
    }

    /// Marks `face` down and NACKs every pending Interest forwarded on it.
    pub fn on_link_down(&mut self, _now: SimTime, face: FaceId) -> Vec<Send> {
        if let Some(up) = self.faces_up.get_mut(face as usize) {
            *up = false;
        }
        let mut failed: Vec<ContentName> = self
            .pit
            .values()
            .filter(|e| e.upstream == face)
            .map(|e| e.name.clone())
            .collect();
        failed.sort();
        let mut out = Vec::new();
        for name in failed {
            let entry = self.pit.remove(&name).expect("collected entry");
            for d in entry.downstream {
                if d.face != face {
                    out.push(self.nack(d.face, name.clone(), NackReason::PathFailure));
                }
            }
        }
        out
    }

    pub fn on_link_up(&mut self, face: FaceId) {
        if let Some(up) = self.faces_up.get_mut(face as usize) {
            *up = true;
        }
    }

    pub fn on_packet(&mut self, now: SimTime, in_face: FaceId, packet: Packet) -> Vec<Send> {
        match packet {
            Packet::Interest(i) => self.on_interest(now, in_face, i),
            Packet::Data(d) => self.on_data(now, in_face, d),
            Packet::Nack(n) => self.on_nack(now, in_face, n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::names::Tag;

    fn name(s: &str) -> ContentName {
        s.parse().unwrap()
    }

    /// Router with faces 0 (downstream) and 1, 2 (upstream toward /p).
    fn router() -> Router {
        let mut fib = Fib::new();
        fib.insert("/p".parse().unwrap(), vec![1, 2]).unwrap();
        Router::new(3, fib, &RouterConfig::default())
    }

    fn t(s: f64) -> SimTime {
        SimTime::from_secs_f64(s)
    }

    fn only(out: Vec<Send>) -> Send {
        assert_eq!(out.len(), 1, "{out:?}");
        out.into_iter().next().unwrap()
    }

    #[test]
    fn tagged_interest_follows_tag() {
        let mut r = router();
        let i = Interest::tagged(name("/p/o/1"), Tag::from_stack(vec![5, 2]));
        let s = only(r.on_interest(t(0.0), 0, i));
        assert_eq!(s.face, 2);
        match s.packet {
            Packet::Interest(i) => assert_eq!(i.tag.unwrap().as_slice(), &[5]),
            p => panic!("{p:?}"),
        }
    }

    #[test]
    fn probe_ignores_cache() {
        let mut r = router();
        r.cs_mut().insert(Data::new(name("/p/o/1"), 1024));
        let s = only(r.on_interest(t(0.0), 0, Interest::probe(name("/p/o/1"))));
        assert!(matches!(s.packet, Packet::Interest(_)));
        assert_ne!(s.face, 0);
        // a regular Interest is served from the store with the flag set
        let s = only(r.on_interest(t(0.0), 0, Interest::new(name("/p/o/1"))));
        match s.packet {
            Packet::Data(d) => assert!(d.from_intermediate),
            p => panic!("{p:?}"),
        }
        assert_eq!(r.counters().cs_hits, 1);
    }

    #[test]
    fn round_robin_spreads_untagged() {
        let mut r = router();
        let faces: Vec<FaceId> = (0..4)
            .map(|k| only(r.on_interest(t(0.0), 0, Interest::new(name(&format!("/p/o/{k}"))))).face)
            .collect();
        assert_eq!(faces, vec![1, 2, 1, 2]);
    }

    #[test]
    fn dead_tag_face_nacks_and_falls_back() {
        let mut r = router();
        r.on_link_down(t(0.0), 2);
        let out = r.on_interest(t(0.0), 0, Interest::tagged(name("/p/o/1"), Tag::from_stack(vec![7, 2])));
        assert_eq!(out.len(), 2);
        assert_eq!(
            out[0],
            Send {
                face: 0,
                packet: Packet::Nack(Nack {
                    name: name("/p/o/1"),
                    reason: NackReason::PathFailure
                })
            }
        );
        assert_eq!(out[1].face, 1);
        match &out[1].packet {
            Packet::Interest(i) => assert!(i.tag.is_none()),
            p => panic!("{p:?}"),
        }
        // the Data still comes back downstream
        let back = only(r.on_data(t(0.1), 1, Data::new(name("/p/o/1"), 1024)));
        assert_eq!(back.face, 0);
    }

    #[test]
    fn tag_face_not_in_fib_entry_falls_back() {
        let mut r = router();
        let out = r.on_interest(t(0.0), 0, Interest::tagged(name("/p/o/1"), Tag::from_stack(vec![0])));
        assert_eq!(out.len(), 2);
        assert_eq!(r.counters().path_failures, 1);
    }

    #[test]
    fn no_route_nacks() {
        let mut r = router();
        let s = only(r.on_interest(t(0.0), 0, Interest::new(name("/q/1"))));
        assert_eq!(
            s.packet,
            Packet::Nack(Nack {
                name: name("/q/1"),
                reason: NackReason::NoRoute
            })
        );
        r.on_link_down(t(0.0), 1);
        r.on_link_down(t(0.0), 2);
        let s = only(r.on_interest(t(0.0), 0, Interest::new(name("/p/o/1"))));
        assert!(matches!(s.packet, Packet::Nack(Nack { reason: NackReason::NoRoute, .. })));
    }

    #[test]
    fn aggregation_marks_intermediate() {
        let mut r = router();
        only(r.on_interest(t(0.0), 0, Interest::new(name("/p/o/1"))));
        // a second downstream on face 2 is aggregated, nothing forwarded
        assert!(r.on_interest(t(0.0), 2, Interest::new(name("/p/o/1"))).is_empty());
        let out = r.on_data(t(0.1), 1, Data::new(name("/p/o/1"), 1024));
        let flags: Vec<(FaceId, bool)> = out
            .iter()
            .map(|s| match &s.packet {
                Packet::Data(d) => (s.face, d.from_intermediate),
                p => panic!("{p:?}"),
            })
            .collect();
        assert_eq!(flags, vec![(0, false), (2, true)]);
        assert_eq!(r.pit_len(), 0);
    }

    #[test]
    fn retransmission_from_same_face_is_forwarded() {
        let mut r = router();
        only(r.on_interest(t(0.0), 0, Interest::new(name("/p/o/1"))));
        let s = only(r.on_interest(t(1.0), 0, Interest::new(name("/p/o/1"))));
        assert!(matches!(s.packet, Packet::Interest(_)));
        assert_eq!(r.pit_entry(&name("/p/o/1")).unwrap().downstream.len(), 1);
    }

    #[test]
    fn unsolicited_data_dropped() {
        let mut r = router();
        assert!(r.on_data(t(0.0), 1, Data::new(name("/p/o/1"), 1024)).is_empty());
        assert_eq!(r.counters().unsolicited, 1);
    }

    #[test]
    fn expired_entry_is_gone() {
        let mut r = router();
        only(r.on_interest(t(0.0), 0, Interest::new(name("/p/o/1"))));
        assert!(r.on_data(t(5.0), 1, Data::new(name("/p/o/1"), 1024)).is_empty());
    }

    #[test]
    fn probe_data_gets_in_face_pushed_and_is_not_cached() {
        let mut r = router();
        only(r.on_interest(t(0.0), 0, Interest::probe(name("/p/o/1"))));
        let mut d = Data::new(name("/p/o/1"), 1024);
        d.tag = Some(Tag::from_stack(vec![4]));
        let s = only(r.on_data(t(0.1), 2, d));
        match s.packet {
            Packet::Data(d) => assert_eq!(d.tag.unwrap().as_slice(), &[4, 2]),
            p => panic!("{p:?}"),
        }
        assert!(!r.cs().contains(&name("/p/o/1")));
    }

    #[test]
    fn link_down_nacks_pending() {
        let mut r = router();
        assert!(r.on_link_down(t(0.0), 1).is_empty());
        r.on_link_up(1);
        let s = only(r.on_interest(t(0.0), 0, Interest::tagged(name("/p/o/1"), Tag::from_stack(vec![1]))));
        assert_eq!(s.face, 1);
        assert!(r.on_interest(t(0.0), 2, Interest::new(name("/p/o/1"))).is_empty());
        let out = r.on_link_down(t(0.1), 1);
        let faces: Vec<FaceId> = out.iter().map(|s| s.face).collect();
        assert_eq!(faces, vec![0, 2]);
        assert!(out
            .iter()
            .all(|s| matches!(s.packet, Packet::Nack(Nack { reason: NackReason::PathFailure, .. }))));
        assert_eq!(r.pit_len(), 0);
    }

    #[test]
    fn hop_budget_exhaustion_drops() {
        let mut r = router();
        let mut i = Interest::new(name("/p/o/1"));
        i.hop_budget = 0;
        assert!(r.on_interest(t(0.0), 0, i).is_empty());
        assert_eq!(r.counters().hop_drops, 1);
    }

    #[test]
    fn cs_respects_capacity() {
        let mut cs = ContentStore::new(3);
        for k in 0..10 {
            cs.insert(Data::new(name(&format!("/p/{k}")), 10));
            assert!(cs.len() <= 3);
        }
        assert!(cs.contains(&name("/p/9")) && !cs.contains(&name("/p/6")));
    }
}
