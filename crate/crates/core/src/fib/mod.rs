//! Name-prefix forwarding table and the Forwarding Acceleration Base (FAB).
//!
//! The FIB answers longest-prefix-match queries. The FAB is an exact-match
//! cache from flow name to FIB entry, bounded by a recency list: a hit moves
//! the tuple to the head, an insert beyond capacity evicts the tail. The FAB
//! never changes a forwarding decision; [`resolve`] always agrees with
//! [`Fib::lpm`].

mod recency;

use std::collections::HashMap;

pub use recency::RecencyTable;

use crate::names::{ContentName, FaceId, FlowName};

pub const DEFAULT_FAB_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FibEntry {
    pub prefix: FlowName,
    /// Eligible next-hop faces in preference order. Never empty.
    pub faces: Vec<FaceId>,
}

/// Generation-checked handle to a FIB entry. A handle goes stale when the
/// entry it names is modified or removed, or when a new prefix is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EntryRef {
    index: usize,
    generation: u64,
    epoch: u64,
}

#[derive(Debug, Clone)]
struct Slot {
    entry: FibEntry,
    generation: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Fib {
    slots: Vec<Option<Slot>>,
    by_prefix: HashMap<FlowName, usize>,
    /// Number of entries whose parent prefix is the key. A flow with
    /// children can resolve differently per packet, so the FAB skips it.
    children: HashMap<FlowName, usize>,
    next_generation: u64,
    epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FibError {
    #[error("FIB entry {0} has no faces")]
    NoFaces(FlowName),
}

fn parent(prefix: &FlowName) -> Option<FlowName> {
    if prefix.is_empty() {
        None
    } else {
        let c = prefix.components();
        Some(FlowName::from_components(c[..c.len() - 1].to_vec()).expect("valid parent"))
    }
}

impl Fib {
    pub fn new() -> Self {
        Fib::default()
    }

    pub fn len(&self) -> usize {
        self.by_prefix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_prefix.is_empty()
    }

    /// Inserts or replaces the entry for `prefix`.
    pub fn insert(&mut self, prefix: FlowName, faces: Vec<FaceId>) -> Result<EntryRef, FibError> {
        if faces.is_empty() {
            return Err(FibError::NoFaces(prefix));
        }
        self.next_generation += 1;
        let generation = self.next_generation;
        if let Some(&index) = self.by_prefix.get(&prefix) {
            let slot = self.slots[index].as_mut().expect("indexed slot");
            slot.entry.faces = faces;
            slot.generation = generation;
            return Ok(self.handle(index));
        }
        // a new prefix can shadow cached resolutions of longer flows
        self.epoch += 1;
        if let Some(p) = parent(&prefix) {
            *self.children.entry(p).or_default() += 1;
        }
        let index = self.slots.len();
        self.slots.push(Some(Slot {
            entry: FibEntry {
                prefix: prefix.clone(),
                faces,
            },
            generation,
        }));
        self.by_prefix.insert(prefix, index);
        Ok(self.handle(index))
    }

    pub fn remove(&mut self, prefix: &FlowName) -> Option<FibEntry> {
        let index = self.by_prefix.remove(prefix)?;
        if let Some(p) = parent(prefix) {
            if let Some(n) = self.children.get_mut(&p) {
                *n -= 1;
                if *n == 0 {
                    self.children.remove(&p);
                }
            }
        }
        self.slots[index].take().map(|s| s.entry)
    }

    fn handle(&self, index: usize) -> EntryRef {
        let slot = self.slots[index].as_ref().expect("live slot");
        EntryRef {
            index,
            generation: slot.generation,
            epoch: self.epoch,
        }
    }

    /// Dereferences a handle; `None` if the handle is stale.
    pub fn get(&self, r: EntryRef) -> Option<&FibEntry> {
        if r.epoch != self.epoch {
            return None;
        }
        match self.slots.get(r.index) {
            Some(Some(slot)) if slot.generation == r.generation => Some(&slot.entry),
            _ => None,
        }
    }

    pub fn entry(&self, prefix: &FlowName) -> Option<&FibEntry> {
        self.by_prefix
            .get(prefix)
            .and_then(|&i| self.slots[i].as_ref())
            .map(|s| &s.entry)
    }

    pub fn entries(&self) -> impl Iterator<Item = &FibEntry> {
        self.slots.iter().flatten().map(|s| &s.entry)
    }

    /// Longest-prefix match, returning a handle.
    pub fn lpm_ref(&self, name: &ContentName) -> Option<EntryRef> {
        let c = name.components();
        // walk from the full name down to the root prefix
        (0..=c.len()).rev().find_map(|n| {
            let prefix = FlowName::from_components(c[..n].to_vec()).expect("valid prefix");
            self.by_prefix.get(&prefix).map(|&i| self.handle(i))
        })
    }

    pub fn lpm(&self, name: &ContentName) -> Option<&FibEntry> {
        self.lpm_ref(name).and_then(|r| self.get(r))
    }

    fn has_children(&self, flow: &FlowName) -> bool {
        self.children.contains_key(flow)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FabStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    /// Tuples dropped because their FIB entry changed.
    pub stale: u64,
}

impl FabStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

#[derive(Debug)]
pub struct FabTable {
    table: RecencyTable<FlowName, EntryRef>,
    stats: FabStats,
}

impl FabTable {
    pub fn new(capacity: usize) -> Self {
        FabTable {
            table: RecencyTable::new(capacity),
            stats: FabStats::default(),
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

    pub fn stats(&self) -> FabStats {
        self.stats
    }

    pub fn contains(&self, flow: &FlowName) -> bool {
        self.table.contains(flow)
    }

    /// Exact-match lookup. A hit moves the tuple to the list head; a tuple
    /// whose entry went stale is dropped and reported as a miss.
    pub fn lookup<'f>(&mut self, fib: &'f Fib, flow: &FlowName) -> Option<&'f FibEntry> {
        match self.table.get_touch(flow).map(|r| *r) {
            Some(r) => match fib.get(r) {
                Some(entry) => {
                    self.stats.hits += 1;
                    Some(entry)
                }
                None => {
                    self.table.remove(flow);
                    self.stats.stale += 1;
                    self.stats.misses += 1;
                    None
                }
            },
            None => {
                self.stats.misses += 1;
                None
            }
        }
    }

    /// Inserts a tuple at the list head, returning the evicted flow name if
    /// the table overflowed. Re-inserting a present flow replaces it.
    pub fn insert(&mut self, flow: FlowName, entry: EntryRef) -> Option<FlowName> {
        let evicted = self.table.insert(flow, entry).map(|(k, _)| k);
        if evicted.is_some() {
            self.stats.evictions += 1;
        }
        evicted
    }

    /// Flow names from most to least recent.
    pub fn flows_by_recency(&self) -> impl Iterator<Item = &FlowName> + '_ {
        self.table.keys_by_recency()
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        self.table.check_invariants()
    }
}

/// FIB resolution through the FAB: exact match on the flow name first, LPM
/// on a miss, with the LPM result cached for the flow.
pub fn resolve<'f>(fib: &'f Fib, fab: &mut FabTable, name: &ContentName) -> Option<&'f FibEntry> {
    let flow = name.flow_name();
    if fib.has_children(&flow) {
        return fib.lpm(name);
    }
    if let Some(entry) = fab.lookup(fib, &flow) {
        return Some(entry);
    }
    let r = fib.lpm_ref(name)?;
    fab.insert(flow, r);
    fib.get(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow(s: &str) -> FlowName {
        s.parse().unwrap()
    }

    fn name(s: &str) -> ContentName {
        s.parse().unwrap()
    }

    fn fib_with(prefixes: &[&str]) -> Fib {
        let mut fib = Fib::new();
        for (i, p) in prefixes.iter().enumerate() {
            fib.insert(flow(p), vec![i as FaceId]).unwrap();
        }
        fib
    }

    #[test]
    fn lpm_examples() {
        let fib = fib_with(&["/AIT/sri", "/AIT"]);
        assert_eq!(fib.lpm(&name("/AIT/sri/mvc_01/5")).unwrap().prefix, flow("/AIT/sri"));
        let fib = fib_with(&["/a"]);
        assert!(fib.lpm(&name("/b/1")).is_none());
        let fib = fib_with(&["/a", "/a/b", "/a/b/c"]);
        assert_eq!(fib.lpm(&name("/a/b/x/1")).unwrap().prefix, flow("/a/b"));
    }

    #[test]
    fn root_prefix_is_default_route() {
        let fib = fib_with(&["/"]);
        assert_eq!(fib.lpm(&name("/z/1")).unwrap().prefix, flow("/"));
    }

    #[test]
    fn empty_faces_rejected() {
        assert!(Fib::new().insert(flow("/a"), vec![]).is_err());
    }

    #[test]
    fn fab_hit_returns_inserted_entry() {
        let fib = fib_with(&["/amazon"]);
        let mut fab = FabTable::new(4);
        let r = fib.lpm_ref(&name("/amazon/BBB/1")).unwrap();
        assert_eq!(fab.insert(flow("/amazon/BBB"), r), None);
        assert_eq!(fab.lookup(&fib, &flow("/amazon/BBB")).unwrap().prefix, flow("/amazon"));
        assert_eq!(fab.stats().hits, 1);
    }

    #[test]
    fn fab_empty_miss() {
        let fib = fib_with(&["/a"]);
        let mut fab = FabTable::new(4);
        assert!(fab.lookup(&fib, &flow("/a/x")).is_none());
        assert!(fab.is_empty());
    }

    fn insert_flow(fab: &mut FabTable, fib: &Fib, f: &str) -> Option<FlowName> {
        let r = fib.lpm_ref(&flow(f).packet(0)).unwrap();
        fab.insert(flow(f), r)
    }

    #[test]
    fn fab_fifo_eviction() {
        let fib = fib_with(&["/"]);
        let mut fab = FabTable::new(2);
        insert_flow(&mut fab, &fib, "/A");
        insert_flow(&mut fab, &fib, "/B");
        assert_eq!(insert_flow(&mut fab, &fib, "/C"), Some(flow("/A")));

        let mut fab = FabTable::new(1);
        insert_flow(&mut fab, &fib, "/A");
        assert_eq!(insert_flow(&mut fab, &fib, "/B"), Some(flow("/A")));
        assert!(fab.lookup(&fib, &flow("/A")).is_none());
    }

    #[test]
    fn fab_touch_changes_victim() {
        let fib = fib_with(&["/"]);
        // capacity 2: insert A, B; touch A; insert C evicts B
        let mut fab = FabTable::new(2);
        insert_flow(&mut fab, &fib, "/A");
        insert_flow(&mut fab, &fib, "/B");
        assert!(fab.lookup(&fib, &flow("/A")).is_some());
        assert_eq!(insert_flow(&mut fab, &fib, "/C"), Some(flow("/B")));
        assert!(fab.contains(&flow("/A")) && fab.contains(&flow("/C")));

        // capacity 3: insert A, B, C; touch B; insert D evicts A
        let mut fab = FabTable::new(3);
        for f in ["/A", "/B", "/C"] {
            insert_flow(&mut fab, &fib, f);
        }
        fab.lookup(&fib, &flow("/B"));
        assert_eq!(insert_flow(&mut fab, &fib, "/D"), Some(flow("/A")));
        fab.check_invariants().unwrap();
    }

    #[test]
    fn duplicate_insert_touches() {
        let fib = fib_with(&["/"]);
        let mut fab = FabTable::new(2);
        insert_flow(&mut fab, &fib, "/A");
        insert_flow(&mut fab, &fib, "/B");
        assert_eq!(insert_flow(&mut fab, &fib, "/A"), None);
        assert_eq!(insert_flow(&mut fab, &fib, "/C"), Some(flow("/B")));
    }

    #[test]
    fn resolve_caches_then_hits() {
        let fib = fib_with(&["/AIT/sri", "/AIT"]);
        let mut fab = FabTable::new(8);
        let n = name("/AIT/sri/mvc_01/5");
        assert_eq!(resolve(&fib, &mut fab, &n), fib.lpm(&n));
        assert_eq!(fab.stats().hits, 0);
        assert_eq!(resolve(&fib, &mut fab, &name("/AIT/sri/mvc_01/6")), fib.lpm(&n));
        assert_eq!(fab.stats().hits, 1);
    }

    #[test]
    fn removed_entry_is_lazily_invalidated() {
        let mut fib = fib_with(&["/a/b", "/a"]);
        let mut fab = FabTable::new(8);
        let n = name("/a/b/c/1");
        assert_eq!(resolve(&fib, &mut fab, &n).unwrap().prefix, flow("/a/b"));
        fib.remove(&flow("/a/b"));
        assert_eq!(resolve(&fib, &mut fab, &n).unwrap().prefix, flow("/a"));
        assert_eq!(fab.stats().stale, 1);
        assert_eq!(resolve(&fib, &mut fab, &n), fib.lpm(&n));
    }

    #[test]
    fn modified_entry_faces_are_fresh() {
        let mut fib = fib_with(&["/a"]);
        let mut fab = FabTable::new(8);
        let n = name("/a/x/1");
        resolve(&fib, &mut fab, &n);
        fib.insert(flow("/a"), vec![42]).unwrap();
        assert_eq!(resolve(&fib, &mut fab, &n).unwrap().faces, vec![42]);
    }

    #[test]
    fn new_longer_prefix_shadows_cached_flow() {
        let mut fib = fib_with(&["/a"]);
        let mut fab = FabTable::new(8);
        let n = name("/a/b/c/1");
        resolve(&fib, &mut fab, &n);
        fib.insert(flow("/a/b"), vec![9]).unwrap();
        assert_eq!(resolve(&fib, &mut fab, &n).unwrap().prefix, flow("/a/b"));
    }

    #[test]
    fn per_packet_entries_bypass_fab() {
        // an entry for one full packet name must not leak to its siblings
        let fib = fib_with(&["/a", "/a/b/6"]);
        let mut fab = FabTable::new(8);
        assert_eq!(resolve(&fib, &mut fab, &name("/a/b/5")).unwrap().prefix, flow("/a"));
        assert_eq!(resolve(&fib, &mut fab, &name("/a/b/6")).unwrap().prefix, flow("/a/b/6"));
    }
}
