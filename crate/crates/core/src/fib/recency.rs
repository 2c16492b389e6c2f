//! Bounded hash table interlinked with a doubly linked recency list.
//!
//! Every tuple lives in one slot of a slab; the slot is reachable from its
//! hash bucket chain and from its position in the list. The list head is
//! the most recently inserted or touched tuple, the tail is the eviction
//! victim.

use std::hash::{DefaultHasher, Hash, Hasher};

const NIL: usize = usize::MAX;

#[derive(Debug)]
struct Slot<K, V> {
    key: K,
    value: V,
    hash: u64,
    prev: usize,
    next: usize,
}

#[derive(Debug)]
pub struct RecencyTable<K, V> {
    buckets: Vec<Vec<usize>>,
    slots: Vec<Option<Slot<K, V>>>,
    free: Vec<usize>,
    head: usize,
    tail: usize,
    len: usize,
    capacity: usize,
}

fn hash_key<K: Hash>(key: &K) -> u64 {
    let mut h = DefaultHasher::new();
    key.hash(&mut h);
    h.finish()
}

impl<K: Hash + Eq, V> RecencyTable<K, V> {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        let nbuckets = capacity.next_power_of_two().clamp(16, 1 << 16);
        RecencyTable {
            buckets: vec![Vec::new(); nbuckets],
            slots: Vec::new(),
            free: Vec::new(),
            head: NIL,
            tail: NIL,
            len: 0,
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn bucket_of(&self, hash: u64) -> usize {
        (hash as usize) & (self.buckets.len() - 1)
    }

    fn slot(&self, i: usize) -> &Slot<K, V> {
        self.slots[i].as_ref().expect("live slot")
    }

    fn slot_mut(&mut self, i: usize) -> &mut Slot<K, V> {
        self.slots[i].as_mut().expect("live slot")
    }

    fn find(&self, key: &K, hash: u64) -> Option<usize> {
        self.buckets[self.bucket_of(hash)]
            .iter()
            .copied()
            .find(|&i| {
                let s = self.slot(i);
                s.hash == hash && s.key == *key
            })
    }

    fn unlink(&mut self, i: usize) {
        let (prev, next) = {
            let s = self.slot(i);
            (s.prev, s.next)
        };
        if prev == NIL {
            self.head = next;
        } else {
            self.slot_mut(prev).next = next;
        }
        if next == NIL {
            self.tail = prev;
        } else {
            self.slot_mut(next).prev = prev;
        }
    }

    fn link_front(&mut self, i: usize) {
        let old = self.head;
        {
            let s = self.slot_mut(i);
            s.prev = NIL;
            s.next = old;
        }
        if old == NIL {
            self.tail = i;
        } else {
            self.slot_mut(old).prev = i;
        }
        self.head = i;
    }

    fn move_to_front(&mut self, i: usize) {
        if self.head != i {
            self.unlink(i);
            self.link_front(i);
        }
    }

    fn remove_slot(&mut self, i: usize) -> (K, V) {
        self.unlink(i);
        let slot = self.slots[i].take().expect("live slot");
        let b = self.bucket_of(slot.hash);
        let chain = &mut self.buckets[b];
        let pos = chain.iter().position(|&j| j == i).expect("slot in its bucket");
        chain.swap_remove(pos);
        self.free.push(i);
        self.len -= 1;
        (slot.key, slot.value)
    }

    /// Looks `key` up without changing its list position.
    pub fn peek(&self, key: &K) -> Option<&V> {
        self.find(key, hash_key(key)).map(|i| &self.slot(i).value)
    }

    pub fn contains(&self, key: &K) -> bool {
        self.find(key, hash_key(key)).is_some()
    }

    /// Looks `key` up and, on a hit, moves the tuple to the list head.
    pub fn get_touch(&mut self, key: &K) -> Option<&mut V> {
        let i = self.find(key, hash_key(key))?;
        self.move_to_front(i);
        Some(&mut self.slot_mut(i).value)
    }

    /// Inserts at the list head. An existing key is replaced in place and
    /// touched. Returns the evicted tail tuple if capacity was exceeded.
    pub fn insert(&mut self, key: K, value: V) -> Option<(K, V)> {
        let hash = hash_key(&key);
        if let Some(i) = self.find(&key, hash) {
            self.slot_mut(i).value = value;
            self.move_to_front(i);
            return None;
        }
        let slot = Slot {
            key,
            value,
            hash,
            prev: NIL,
            next: NIL,
        };
        let i = match self.free.pop() {
            Some(i) => {
                self.slots[i] = Some(slot);
                i
            }
            None => {
                self.slots.push(Some(slot));
                self.slots.len() - 1
            }
        };
        let b = self.bucket_of(hash);
        self.buckets[b].push(i);
        self.link_front(i);
        self.len += 1;
        if self.len > self.capacity {
            let victim = self.tail;
            Some(self.remove_slot(victim))
        } else {
            None
        }
    }

    pub fn remove(&mut self, key: &K) -> Option<V> {
        let i = self.find(key, hash_key(key))?;
        Some(self.remove_slot(i).1)
    }

    /// Keys from most to least recent.
    pub fn keys_by_recency(&self) -> impl Iterator<Item = &K> + '_ {
        let mut cur = self.head;
        std::iter::from_fn(move || {
            if cur == NIL {
                None
            } else {
                let s = self.slot(cur);
                cur = s.next;
                Some(&s.key)
            }
        })
    }

    /// Verifies the interlinking: list length equals bucket tuple count,
    /// each tuple is visited once by the list walk, prev/next are mutual.
    pub fn check_invariants(&self) -> Result<(), String> {
        let in_buckets: usize = self.buckets.iter().map(Vec::len).sum();
        if in_buckets != self.len {
            return Err(format!("{} tuples in buckets, len {}", in_buckets, self.len));
        }
        if self.len > self.capacity {
            return Err(format!("len {} over capacity {}", self.len, self.capacity));
        }
        let mut seen = vec![false; self.slots.len()];
        let mut prev = NIL;
        let mut cur = self.head;
        let mut walked = 0;
        while cur != NIL {
            if seen[cur] {
                return Err("cycle in recency list".into());
            }
            seen[cur] = true;
            let s = self.slot(cur);
            if s.prev != prev {
                return Err(format!("slot {cur} has prev {} expected {prev}", s.prev));
            }
            if !self.buckets[self.bucket_of(s.hash)].contains(&cur) {
                return Err(format!("slot {cur} missing from its bucket"));
            }
            prev = cur;
            cur = s.next;
            walked += 1;
        }
        if prev != self.tail {
            return Err("tail does not match last list element".into());
        }
        if walked != self.len {
            return Err(format!("list walk visited {walked}, len {}", self.len));
        }
        Ok(())
    }
}
