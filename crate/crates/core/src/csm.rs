//! Content Store Manager: the caching policy attached to a router.
//!
//! The forwarder hands every Interest and every innovative Data packet to the
//! CSM, which either answers from the store, forwards, or caches. PopNetCod
//! decides placement when the Interest arrives and signals the decision
//! upstream with `caching_down`; the caching router marks its reply with
//! `cached_up` so no router further down caches it again.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ContentLibrary, NamePrefix};
use crate::content_store::ContentStore;
use crate::error::{Error, Result};
use crate::forwarder::Interest;
use crate::popularity::{eviction_allowance, placement_score, EvictionQueue, PolicyView, RecentInterests, ToCacheTable};
use crate::rlnc::CodedPacket;
use crate::types::{FaceId, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "popnetcod")]
    PopNetCod,
    #[serde(rename = "lce_lru")]
    LceLru,
    #[serde(rename = "lce_nolimit")]
    LceNoLimit,
    #[serde(rename = "nocache")]
    NoCache,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::PopNetCod,
        PolicyKind::LceLru,
        PolicyKind::LceNoLimit,
        PolicyKind::NoCache,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::PopNetCod => "popnetcod",
            PolicyKind::LceLru => "lce_lru",
            PolicyKind::LceNoLimit => "lce_nolimit",
            PolicyKind::NoCache => "nocache",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown policy {s:?} (expected popnetcod, lce_lru, lce_nolimit or nocache)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CsmDecision {
    ReplyData(CodedPacket),
    ForwardInterest { interest: Interest, caching_down_set: bool },
}

#[derive(Clone, Debug)]
pub struct DataOutcome {
    /// Packet to send downstream.
    pub packet: CodedPacket,
    pub inserted: bool,
    /// `packet` was generated from the store entry (PopNetCod caching path).
    pub from_store: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CsmStats {
    pub inserted: u64,
    pub evicted: u64,
    pub fallback_evictions: u64,
    pub marks: u64,
    pub served: u64,
}

/// Per-prefix recency, ordered only over prefixes that have a store entry.
#[derive(Clone, Debug, Default)]
struct Recency {
    tick: u64,
    last: HashMap<NamePrefix, u64>,
    order: BTreeMap<u64, NamePrefix>,
}

impl Recency {
    fn touch(&mut self, prefix: &NamePrefix, cached: bool) {
        self.tick += 1;
        let old = self.last.insert(prefix.clone(), self.tick);
        if cached {
            if let Some(o) = old {
                self.order.remove(&o);
            }
            self.order.insert(self.tick, prefix.clone());
        }
    }

    fn cached(&mut self, prefix: &NamePrefix) {
        let tick = match self.last.get(prefix) {
            Some(t) => *t,
            None => {
                self.tick += 1;
                self.last.insert(prefix.clone(), self.tick);
                self.tick
            }
        };
        self.order.insert(tick, prefix.clone());
    }

    fn uncached(&mut self, prefix: &NamePrefix) {
        if let Some(t) = self.last.get(prefix) {
            self.order.remove(t);
        }
    }

    fn victim(&self, excluding: &NamePrefix) -> Option<NamePrefix> {
        self.order.values().find(|p| *p != excluding).cloned()
    }
}

pub struct Csm {
    policy: PolicyKind,
    library: Arc<ContentLibrary>,
    store: ContentStore,
    capacity: usize,
    downstream: Vec<FaceId>,
    recent: RecentInterests,
    to_cache: ToCacheTable,
    eviction: EvictionQueue,
    last_interest: HashMap<NamePrefix, SimTime>,
    recency: Recency,
    stats: CsmStats,
    insert_log: Option<Vec<u64>>,
}

impl Csm {
    /// `capacity` is ignored by `LceNoLimit` and forced to zero by `NoCache`.
    pub fn new(
        policy: PolicyKind,
        capacity: usize,
        window: SimTime,
        downstream: Vec<FaceId>,
        library: Arc<ContentLibrary>,
    ) -> Self {
        let (store, capacity) = match policy {
            PolicyKind::LceNoLimit => (ContentStore::unlimited(), capacity),
            PolicyKind::NoCache => (ContentStore::with_capacity(0), 0),
            _ => (ContentStore::with_capacity(capacity), capacity),
        };
        Csm {
            policy,
            library,
            store,
            capacity,
            downstream,
            recent: RecentInterests::new(window),
            to_cache: ToCacheTable::default(),
            eviction: EvictionQueue::default(),
            last_interest: HashMap::new(),
            recency: Recency::default(),
            stats: CsmStats::default(),
            insert_log: None,
        }
    }

    /// Keep the tags of every inserted packet.
    pub fn record_inserts(&mut self) {
        self.insert_log.get_or_insert_with(Vec::new);
    }

    pub fn insert_log(&self) -> &[u64] {
        self.insert_log.as_deref().unwrap_or(&[])
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn store(&self) -> &ContentStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ContentStore {
        &mut self.store
    }

    pub fn recent(&self) -> &RecentInterests {
        &self.recent
    }

    pub fn to_cache(&self) -> &ToCacheTable {
        &self.to_cache
    }

    pub fn eviction_queue(&self) -> &EvictionQueue {
        &self.eviction
    }

    pub fn stats(&self) -> &CsmStats {
        &self.stats
    }

    pub fn downstream(&self) -> &[FaceId] {
        &self.downstream
    }

    /// Withdraws one placement mark, e.g. when the flagged Interest could not
    /// be forwarded.
    pub fn unmark(&mut self, prefix: &NamePrefix) -> bool {
        self.to_cache.consume(prefix)
    }

    fn view(&self) -> PolicyView<'_> {
        PolicyView {
            recent: &self.recent,
            store: &self.store,
            downstream: &self.downstream,
            capacity: self.capacity,
        }
    }

    fn serve<R: Rng + ?Sized>(&mut self, prefix: &NamePrefix, face: FaceId, rng: &mut R) -> Option<CodedPacket> {
        if self.store.xi(prefix, face) == 0 {
            return None;
        }
        let p = self.store.serve(prefix, face, rng).ok()?;
        self.stats.served += 1;
        Some(p)
    }

    pub fn process_interest<R: Rng + ?Sized>(
        &mut self,
        mut interest: Interest,
        face: FaceId,
        will_aggregate: bool,
        t: SimTime,
        rng: &mut R,
    ) -> CsmDecision {
        let prefix = interest.prefix.clone();
        let forward = |interest| CsmDecision::ForwardInterest {
            interest,
            caching_down_set: false,
        };
        match self.policy {
            PolicyKind::NoCache => forward(interest),
            PolicyKind::LceNoLimit => match self.serve(&prefix, face, rng) {
                Some(p) => CsmDecision::ReplyData(p),
                None => forward(interest),
            },
            PolicyKind::LceLru => {
                let cached = self.store.entry(&prefix).is_some();
                self.recency.touch(&prefix, cached);
                match self.serve(&prefix, face, rng) {
                    Some(p) => CsmDecision::ReplyData(p),
                    None => forward(interest),
                }
            }
            PolicyKind::PopNetCod => {
                self.last_interest.insert(prefix.clone(), t);
                if interest.caching_down {
                    return match self.serve(&prefix, face, rng) {
                        Some(p) => CsmDecision::ReplyData(p),
                        None => forward(interest),
                    };
                }
                self.recent.record(face, prefix.clone(), t);
                if let Some(p) = self.serve(&prefix, face, rng) {
                    return CsmDecision::ReplyData(p);
                }
                if will_aggregate {
                    return forward(interest);
                }
                self.recent.expire(&mut self.eviction, t);
                let Ok(spec) = self.library.generation_of(&prefix) else {
                    return forward(interest);
                };
                if placement_score(&self.view(), &prefix, face, spec.size) > 0.0 {
                    self.to_cache.mark(prefix);
                    self.stats.marks += 1;
                    interest.caching_down = true;
                    CsmDecision::ForwardInterest {
                        interest,
                        caching_down_set: true,
                    }
                } else {
                    forward(interest)
                }
            }
        }
    }

    fn log_insert(&mut self, tag: u64) {
        self.stats.inserted += 1;
        if let Some(log) = self.insert_log.as_mut() {
            log.push(tag);
        }
    }

    fn passthrough(p: CodedPacket) -> DataOutcome {
        DataOutcome {
            packet: p,
            inserted: false,
            from_store: false,
        }
    }

    pub fn process_data<R: Rng + ?Sized>(&mut self, p: CodedPacket, t: SimTime, rng: &mut R) -> Result<DataOutcome> {
        match self.policy {
            PolicyKind::NoCache => Ok(Self::passthrough(p)),
            PolicyKind::LceNoLimit => {
                let tag = p.tag;
                let inserted = self.store.insert(p.clone())?;
                if inserted {
                    self.log_insert(tag);
                }
                Ok(DataOutcome {
                    packet: p,
                    inserted,
                    from_store: false,
                })
            }
            PolicyKind::LceLru => {
                if self.capacity == 0 || !self.store.is_innovative(&p) {
                    return Ok(Self::passthrough(p));
                }
                while self.store.is_full() {
                    let victim = self.recency.victim(&p.prefix).unwrap_or_else(|| p.prefix.clone());
                    let removed = self.store.evict(&victim, 1, rng);
                    debug_assert_eq!(removed, 1, "LRU order out of sync with store");
                    self.stats.evicted += removed as u64;
                    if self.store.entry(&victim).is_none() {
                        self.recency.uncached(&victim);
                    }
                }
                let new_entry = self.store.entry(&p.prefix).is_none();
                let tag = p.tag;
                let inserted = self.store.insert(p.clone())?;
                if inserted {
                    self.log_insert(tag);
                    if new_entry {
                        self.recency.cached(&p.prefix);
                    }
                }
                Ok(DataOutcome {
                    packet: p,
                    inserted,
                    from_store: false,
                })
            }
            PolicyKind::PopNetCod => {
                if p.cached_up || self.capacity == 0 {
                    return Ok(Self::passthrough(p));
                }
                if !self.to_cache.consume(&p.prefix) {
                    return Ok(Self::passthrough(p));
                }
                let prefix = p.prefix.clone();
                if self.store.is_full() {
                    self.recent.expire(&mut self.eviction, t);
                    self.make_room(&prefix, rng);
                }
                let tag = p.tag;
                let inserted = self.store.insert(p.clone())?;
                if inserted {
                    self.log_insert(tag);
                }
                match self.store.emit(&prefix, None, rng) {
                    Some(mut star) => {
                        star.cached_up = true;
                        Ok(DataOutcome {
                            packet: star,
                            inserted,
                            from_store: true,
                        })
                    }
                    None => Ok(Self::passthrough(p)),
                }
            }
        }
    }

    /// Frees at least one slot. Scans the eviction queue from its head for
    /// the first prefix that can give packets up; prefixes no longer stored
    /// leave the queue. Without a candidate, removes one random row of the
    /// entry with the oldest last Interest.
    fn make_room<R: Rng + ?Sized>(&mut self, incoming: &NamePrefix, rng: &mut R) {
        while self.store.is_full() {
            let view = PolicyView {
                recent: &self.recent,
                store: &self.store,
                downstream: &self.downstream,
                capacity: self.capacity,
            };
            let store = &self.store;
            let found = self.eviction.take_first(
                |p| store.entry(p).is_some(),
                |p| Some(eviction_allowance(&view, p)).filter(|&k| k > 0),
            );
            if let Some((candidate, k)) = found {
                self.stats.evicted += self.store.evict(&candidate, k, rng) as u64;
                continue;
            }
            let Some(victim) = self.fallback_victim(incoming) else {
                return;
            };
            self.stats.evicted += self.store.evict(&victim, 1, rng) as u64;
            self.stats.fallback_evictions += 1;
        }
    }

    fn fallback_victim(&self, incoming: &NamePrefix) -> Option<NamePrefix> {
        let prefixes = self.store.prefixes();
        let pick = |skip_incoming: bool| {
            prefixes
                .iter()
                .filter(|p| !skip_incoming || *p != incoming)
                .min_by_key(|p| self.last_interest.get(*p).copied().unwrap_or(SimTime::ZERO))
                .cloned()
        };
        pick(true).or_else(|| pick(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{LibraryConfig, RepresentationConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn library() -> Arc<ContentLibrary> {
        Arc::new(
            ContentLibrary::new(LibraryConfig {
                videos: 1,
                segments: 4,
                segment_duration_s: 2.0,
                payload_bytes: 1250,
                carried_payload_bytes: Some(4),
                representations: vec![RepresentationConfig {
                    name: "q".into(),
                    bitrate_kbps: 1000,
                    packets: 8,
                    generations: 1,
                }],
            })
            .unwrap(),
        )
    }

    fn src_packet(lib: &ContentLibrary, seg: usize, rng: &mut ChaCha8Rng) -> CodedPacket {
        let prefix = lib.prefix(0, seg, 0, 0);
        let m = crate::rlnc::CodingMatrix::from_source_payloads(prefix.clone(), lib.source_payloads(&prefix).unwrap()).unwrap();
        m.recode(rng).unwrap()
    }

    fn interest(lib: &ContentLibrary, seg: usize) -> Interest {
        Interest::new(lib.prefix(0, seg, 0, 0), 0)
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.as_str().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("lru".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn nocache_never_inserts() {
        let lib = library();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut csm = Csm::new(PolicyKind::NoCache, 100, SimTime::from_secs(10), vec![FaceId(0)], lib.clone());
        for _ in 0..20 {
            let p = src_packet(&lib, 0, &mut rng);
            let out = csm.process_data(p, SimTime::ZERO, &mut rng).unwrap();
            assert!(!out.inserted);
        }
        assert_eq!(csm.store().occupancy(), 0);
        let d = csm.process_interest(interest(&lib, 0), FaceId(0), false, SimTime::ZERO, &mut rng);
        assert!(matches!(d, CsmDecision::ForwardInterest { caching_down_set: false, .. }));
    }

    #[test]
    fn lce_nolimit_caches_everything() {
        let lib = library();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut csm = Csm::new(PolicyKind::LceNoLimit, 1, SimTime::from_secs(10), vec![FaceId(0), FaceId(1)], lib.clone());
        for seg in 0..4 {
            let prefix = lib.prefix(0, seg, 0, 0);
            for (j, payload) in lib.source_payloads(&prefix).unwrap().into_iter().enumerate() {
                let p = CodedPacket::source(prefix.clone(), j, 8, payload);
                csm.process_data(p, SimTime::ZERO, &mut rng).unwrap();
            }
        }
        assert_eq!(csm.store().occupancy(), 32);
        assert_eq!(csm.stats().evicted, 0);
        let d = csm.process_interest(interest(&lib, 2), FaceId(1), false, SimTime::ZERO, &mut rng);
        assert!(matches!(d, CsmDecision::ReplyData(_)));
    }

    #[test]
    fn lce_lru_evicts_least_recently_requested() {
        let lib = library();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut csm = Csm::new(PolicyKind::LceLru, 6, SimTime::from_secs(10), vec![FaceId(0)], lib.clone());
        let t = SimTime::ZERO;
        for seg in [0usize, 1] {
            csm.process_interest(interest(&lib, seg), FaceId(0), false, t, &mut rng);
            for _ in 0..3 {
                csm.process_data(src_packet(&lib, seg, &mut rng), t, &mut rng).unwrap();
            }
        }
        assert_eq!(csm.store().occupancy(), 6);
        // refresh seg 0 so seg 1 becomes least recent
        csm.process_interest(interest(&lib, 0), FaceId(9), false, t, &mut rng);
        csm.process_interest(interest(&lib, 2), FaceId(0), false, t, &mut rng);
        for _ in 0..2 {
            csm.process_data(src_packet(&lib, 2, &mut rng), t, &mut rng).unwrap();
        }
        assert_eq!(csm.store().occupancy(), 6);
        assert_eq!(csm.store().rank(&lib.prefix(0, 1, 0, 0)), 1);
        assert_eq!(csm.store().rank(&lib.prefix(0, 0, 0, 0)), 3);
        assert_eq!(csm.store().rank(&lib.prefix(0, 2, 0, 0)), 2);
    }

    #[test]
    fn popnetcod_cached_up_passes_through() {
        let lib = library();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut csm = Csm::new(PolicyKind::PopNetCod, 10, SimTime::from_secs(10), vec![FaceId(0), FaceId(1)], lib.clone());
        let mut p = src_packet(&lib, 0, &mut rng);
        p.cached_up = true;
        let out = csm.process_data(p.clone(), SimTime::ZERO, &mut rng).unwrap();
        assert_eq!(out.packet, p);
        assert_eq!(csm.store().occupancy(), 0);
        // unmarked prefix passes through as well
        let q = src_packet(&lib, 0, &mut rng);
        let out = csm.process_data(q.clone(), SimTime::ZERO, &mut rng).unwrap();
        assert_eq!(out.packet, q);
        assert!(!out.inserted);
    }
}
