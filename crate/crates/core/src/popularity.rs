//! Popularity measurement and the placement/eviction arithmetic.
//!
//! Per downstream face the router keeps the Interests seen over the last
//! observation window. The share of a prefix in that list is its predicted
//! Interest rate, which is mapped onto the store capacity to obtain how many
//! packets of the prefix the face is expected to need.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use crate::catalog::NamePrefix;
use crate::content_store::ContentStore;
use crate::types::{FaceId, SimTime};

#[derive(Clone, Debug, Default)]
struct FaceWindow {
    entries: VecDeque<(NamePrefix, SimTime)>,
    counts: HashMap<NamePrefix, usize>,
}

/// Recent Interests per face, bounded by an observation window.
#[derive(Clone, Debug)]
pub struct RecentInterests {
    window: SimTime,
    faces: BTreeMap<FaceId, FaceWindow>,
}

impl RecentInterests {
    pub fn new(window: SimTime) -> Self {
        RecentInterests {
            window,
            faces: BTreeMap::new(),
        }
    }

    pub fn window(&self) -> SimTime {
        self.window
    }

    pub fn record(&mut self, face: FaceId, prefix: NamePrefix, t: SimTime) {
        let w = self.faces.entry(face).or_default();
        *w.counts.entry(prefix.clone()).or_insert(0) += 1;
        w.entries.push_back((prefix, t));
    }

    /// Drops entries older than `t - window` from every face (in face order)
    /// and queues their prefixes for eviction consideration.
    pub fn expire(&mut self, queue: &mut EvictionQueue, t: SimTime) {
        let cutoff = t.saturating_sub(self.window);
        for w in self.faces.values_mut() {
            while let Some((_, at)) = w.entries.front() {
                if *at >= cutoff {
                    break;
                }
                let (prefix, _) = w.entries.pop_front().unwrap();
                if let Some(c) = w.counts.get_mut(&prefix) {
                    *c -= 1;
                    if *c == 0 {
                        w.counts.remove(&prefix);
                    }
                }
                queue.push(prefix);
            }
        }
    }

    pub fn total(&self, face: FaceId) -> usize {
        self.faces.get(&face).map_or(0, |w| w.entries.len())
    }

    pub fn count(&self, face: FaceId, prefix: &NamePrefix) -> usize {
        self.faces
            .get(&face)
            .and_then(|w| w.counts.get(prefix))
            .copied()
            .unwrap_or(0)
    }

    /// Share of `prefix` among the recent Interests of `face`; 0 without any.
    pub fn lambda(&self, face: FaceId, prefix: &NamePrefix) -> f64 {
        let total = self.total(face);
        if total == 0 {
            return 0.0;
        }
        self.count(face, prefix) as f64 / total as f64
    }

    pub fn entries(&self, face: FaceId) -> Vec<(NamePrefix, SimTime)> {
        self.faces
            .get(&face)
            .map(|w| w.entries.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Distinct prefixes currently listed for a face.
    pub fn prefixes(&self, face: FaceId) -> Vec<NamePrefix> {
        let mut v: Vec<_> = self
            .faces
            .get(&face)
            .map(|w| w.counts.keys().cloned().collect())
            .unwrap_or_default();
        v.sort();
        v
    }

    pub fn oldest(&self) -> Option<SimTime> {
        self.faces.values().filter_map(|w| w.entries.front().map(|e| e.1)).min()
    }
}

pub fn record_interest(st: &mut RecentInterests, f: FaceId, prefix: NamePrefix, t: SimTime) {
    st.record(f, prefix, t);
}

pub fn expire(st: &mut RecentInterests, eq: &mut EvictionQueue, t: SimTime) {
    st.expire(eq, t);
}

pub fn lambda(st: &RecentInterests, f: FaceId, prefix: &NamePrefix) -> f64 {
    st.lambda(f, prefix)
}

/// Packets of a generation a face is expected to need: `lambda * M`, capped
/// at the generation size.
pub fn target_cache_count(lam: f64, capacity: usize, generation_size: usize) -> f64 {
    let want = lam * capacity as f64;
    if want < generation_size as f64 {
        want
    } else {
        generation_size as f64
    }
}

/// Outstanding "cache the next packet" marks per prefix.
#[derive(Clone, Debug, Default)]
pub struct ToCacheTable {
    marks: HashMap<NamePrefix, usize>,
}

impl ToCacheTable {
    pub fn mark(&mut self, prefix: NamePrefix) {
        *self.marks.entry(prefix).or_insert(0) += 1;
    }

    pub fn consume(&mut self, prefix: &NamePrefix) -> bool {
        match self.marks.get_mut(prefix) {
            None => false,
            Some(c) => {
                *c -= 1;
                if *c == 0 {
                    self.marks.remove(prefix);
                }
                true
            }
        }
    }

    pub fn count(&self, prefix: &NamePrefix) -> usize {
        self.marks.get(prefix).copied().unwrap_or(0)
    }

    pub fn contains(&self, prefix: &NamePrefix) -> bool {
        self.marks.contains_key(prefix)
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    /// Sorted snapshot of (prefix, count).
    pub fn snapshot(&self) -> Vec<(NamePrefix, usize)> {
        let mut v: Vec<_> = self.marks.iter().map(|(p, c)| (p.clone(), *c)).collect();
        v.sort();
        v
    }
}

/// FIFO of prefixes to consider for eviction. A prefix already queued keeps
/// its place when pushed again.
#[derive(Clone, Debug, Default)]
pub struct EvictionQueue {
    queue: VecDeque<NamePrefix>,
    members: HashSet<NamePrefix>,
}

impl EvictionQueue {
    pub fn push(&mut self, prefix: NamePrefix) {
        if self.members.insert(prefix.clone()) {
            self.queue.push_back(prefix);
        }
    }

    pub fn pop(&mut self) -> Option<NamePrefix> {
        let p = self.queue.pop_front()?;
        self.members.remove(&p);
        Some(p)
    }

    pub fn contains(&self, prefix: &NamePrefix) -> bool {
        self.members.contains(prefix)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn to_vec(&self) -> Vec<NamePrefix> {
        self.queue.iter().cloned().collect()
    }

    /// Scans from the head and removes the first prefix for which `pick`
    /// returns a value. Prefixes for which `keep` is false are dropped on
    /// the way; the others stay queued in order.
    pub fn take_first<T>(
        &mut self,
        mut keep: impl FnMut(&NamePrefix) -> bool,
        mut pick: impl FnMut(&NamePrefix) -> Option<T>,
    ) -> Option<(NamePrefix, T)> {
        let mut i = 0;
        while i < self.queue.len() {
            let p = &self.queue[i];
            if !keep(p) {
                let p = self.queue.remove(i).expect("index in range");
                self.members.remove(&p);
                continue;
            }
            if let Some(v) = pick(p) {
                let p = self.queue.remove(i).expect("index in range");
                self.members.remove(&p);
                return Some((p, v));
            }
            i += 1;
        }
        None
    }
}

/// Read-only router state the placement and eviction rules look at.
#[derive(Clone, Copy)]
pub struct PolicyView<'a> {
    pub recent: &'a RecentInterests,
    pub store: &'a ContentStore,
    pub downstream: &'a [FaceId],
    pub capacity: usize,
}

impl PolicyView<'_> {
    pub fn target(&self, face: FaceId, prefix: &NamePrefix, generation_size: usize) -> f64 {
        let total = self.recent.total(face);
        if total == 0 {
            return 0.0;
        }
        // count * M / total keeps integer products exact
        let want = (self.recent.count(face, prefix) * self.capacity) as f64 / total as f64;
        want.min(generation_size as f64)
    }
}

/// Average shortfall `M^f - xi^f` over the downstream faces other than the
/// arrival face. Zero when the router has a single downstream face.
pub fn placement_score(view: &PolicyView<'_>, prefix: &NamePrefix, arrival: FaceId, generation_size: usize) -> f64 {
    let n = view.downstream.len();
    if n <= 1 {
        return 0.0;
    }
    let sum: f64 = view
        .downstream
        .iter()
        .filter(|&&f| f != arrival)
        .map(|&f| view.target(f, prefix, generation_size) - view.store.xi(prefix, f) as f64)
        .sum();
    sum / (n - 1) as f64
}

/// Packets of `prefix` that can go while still covering every face's
/// expected need: `min_f (rank - M^f)`, floored to a packet count >= 0.
pub fn eviction_allowance(view: &PolicyView<'_>, prefix: &NamePrefix) -> usize {
    let Some(entry) = view.store.entry(prefix) else {
        return 0;
    };
    let rank = entry.rank();
    let generation_size = entry.matrix().width();
    let min = view
        .downstream
        .iter()
        .map(|&f| rank as f64 - view.target(f, prefix, generation_size))
        .fold(rank as f64, f64::min);
    if min <= 0.0 {
        0
    } else {
        (min.floor() as usize).min(rank)
    }
}
