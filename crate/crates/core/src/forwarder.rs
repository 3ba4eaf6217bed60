//! NDN router: PIT with Interest aggregation, FIB, and CSM integration.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use rand::Rng;

use crate::catalog::{ContentLibrary, NamePrefix};
use crate::csm::{Csm, CsmDecision, PolicyKind};
use crate::error::{Error, Result};
use crate::rlnc::CodedPacket;
use crate::types::{FaceId, SimTime};

/// Request for any innovative packet of `prefix`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interest {
    pub prefix: NamePrefix,
    pub nonce: u64,
    pub caching_down: bool,
}

impl Interest {
    pub fn new(prefix: NamePrefix, nonce: u64) -> Self {
        Interest {
            prefix,
            nonce,
            caching_down: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Packet {
    Interest(Interest),
    Data(CodedPacket),
}

impl Packet {
    pub fn prefix(&self) -> &NamePrefix {
        match self {
            Packet::Interest(i) => &i.prefix,
            Packet::Data(d) => &d.prefix,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Emission {
    pub face: FaceId,
    pub packet: Packet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InterestOutcome {
    CsHit,
    Aggregated,
    Forwarded,
    Dropped,
}

impl InterestOutcome {
    /// Hit sample used by the cache-hit metric: aggregations count as hits.
    pub fn hit_sample(self) -> bool {
        matches!(self, InterestOutcome::CsHit | InterestOutcome::Aggregated)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataDisposition {
    Unsolicited,
    Duplicate,
    /// Processed by the CSM; `sent` packets went downstream.
    Delivered { sent: usize },
}

/// Pending Interests of one prefix, each kept with its arrival time so it
/// can expire after the Interest lifetime.
#[derive(Clone, Debug, Default)]
pub struct PitEntry {
    pending: BTreeMap<FaceId, VecDeque<SimTime>>,
    outstanding_up: VecDeque<SimTime>,
}

impl PitEntry {
    pub fn pending(&self, face: FaceId) -> usize {
        self.pending.get(&face).map_or(0, VecDeque::len)
    }

    pub fn max_pending(&self) -> usize {
        self.pending.values().map(VecDeque::len).max().unwrap_or(0)
    }

    pub fn total_pending(&self) -> usize {
        self.pending.values().map(VecDeque::len).sum()
    }

    pub fn outstanding_up(&self) -> usize {
        self.outstanding_up.len()
    }

    pub fn pending_faces(&self) -> Vec<FaceId> {
        self.pending.iter().filter(|(_, q)| !q.is_empty()).map(|(f, _)| *f).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.outstanding_up.is_empty() && self.total_pending() == 0
    }

    /// The Interest would not need to go upstream: the outstanding requests
    /// already cover the largest per-face demand including this one.
    pub fn would_aggregate(&self, face: FaceId) -> bool {
        let need = self.max_pending().max(self.pending(face) + 1);
        self.outstanding_up() >= need
    }

    fn add_pending(&mut self, face: FaceId, t: SimTime) {
        self.pending.entry(face).or_default().push_back(t);
    }

    fn pop_pending(&mut self, face: FaceId) -> bool {
        let Some(q) = self.pending.get_mut(&face) else {
            return false;
        };
        let popped = q.pop_front().is_some();
        if q.is_empty() {
            self.pending.remove(&face);
        }
        popped
    }

    /// Drops records older than `lifetime`; returns (pending, outstanding) dropped.
    fn purge(&mut self, t: SimTime, lifetime: SimTime) -> (usize, usize) {
        let alive = |s: &SimTime| t.saturating_sub(*s) < lifetime;
        let mut dropped_pending = 0;
        self.pending.retain(|_, q| {
            while q.front().is_some_and(|s| !alive(s)) {
                q.pop_front();
                dropped_pending += 1;
            }
            !q.is_empty()
        });
        let mut dropped_up = 0;
        while self.outstanding_up.front().is_some_and(|s| !alive(s)) {
            self.outstanding_up.pop_front();
            dropped_up += 1;
        }
        (dropped_pending, dropped_up)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FibEntry {
    /// Object-name prefix; the empty pattern matches every name.
    pub pattern: String,
    pub faces: Vec<(FaceId, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fib {
    entries: Vec<FibEntry>,
}

impl Fib {
    pub fn new() -> Self {
        Fib::default()
    }

    pub fn add_route(&mut self, pattern: impl Into<String>, faces: Vec<(FaceId, f64)>) -> Result<()> {
        let pattern = pattern.into().trim_start_matches('/').to_string();
        if faces.is_empty() {
            return Err(Error::config(format!("route {pattern:?} has no upstream face")));
        }
        if faces.iter().any(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config(format!("route {pattern:?} has a non-positive weight")));
        }
        self.entries.retain(|e| e.pattern != pattern);
        self.entries.push(FibEntry { pattern, faces });
        Ok(())
    }

    pub fn entries(&self) -> &[FibEntry] {
        &self.entries
    }

    pub fn lookup(&self, prefix: &NamePrefix) -> Option<&FibEntry> {
        self.entries
            .iter()
            .filter(|e| prefix.object_name.starts_with(e.pattern.as_str()))
            .max_by_key(|e| e.pattern.len())
    }

    /// Weighted random choice among the upstream faces of the longest match.
    pub fn next_face<R: Rng + ?Sized>(&self, prefix: &NamePrefix, rng: &mut R) -> Result<FaceId> {
        let entry = self.lookup(prefix).ok_or_else(|| Error::NoRoute(prefix.to_string()))?;
        if entry.faces.len() == 1 {
            return Ok(entry.faces[0].0);
        }
        let total: f64 = entry.faces.iter().map(|(_, w)| w).sum();
        let mut x = rng.gen::<f64>() * total;
        for (face, w) in &entry.faces {
            if x < *w {
                return Ok(*face);
            }
            x -= w;
        }
        Ok(entry.faces[entry.faces.len() - 1].0)
    }
}

pub fn fib_next_face<R: Rng + ?Sized>(fib: &Fib, prefix: &NamePrefix, rng: &mut R) -> Result<FaceId> {
    fib.next_face(prefix, rng)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RouterCounters {
    pub interests_received: u64,
    pub cs_hits: u64,
    pub aggregated: u64,
    pub forwarded: u64,
    pub dropped: u64,
    pub data_received: u64,
    pub unsolicited: u64,
    pub duplicates: u64,
    pub data_sent: u64,
    pub expired_pending: u64,
    pub expired_outstanding: u64,
}

impl RouterCounters {
    /// Every received Interest is accounted for by exactly one outcome.
    pub fn pit_conserved(&self) -> bool {
        self.interests_received == self.cs_hits + self.aggregated + self.forwarded + self.dropped
    }
}

#[derive(Clone, Debug)]
pub struct RouterConfig {
    pub policy: PolicyKind,
    pub capacity: usize,
    pub window: SimTime,
    pub interest_lifetime: SimTime,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            policy: PolicyKind::PopNetCod,
            capacity: 0,
            window: SimTime::from_secs(10),
            interest_lifetime: SimTime::from_secs(2),
        }
    }
}

pub struct Router {
    id: usize,
    csm: Csm,
    fib: Fib,
    pit: HashMap<NamePrefix, PitEntry>,
    lifetime: SimTime,
    counters: RouterCounters,
    next_tag: u64,
    /// Interests received and Data sent per (face, prefix), when auditing.
    audit: Option<HashMap<(FaceId, NamePrefix), (u64, u64)>>,
}

impl Router {
    pub fn new(id: usize, cfg: &RouterConfig, downstream: Vec<FaceId>, fib: Fib, library: Arc<ContentLibrary>) -> Self {
        Router {
            id,
            csm: Csm::new(cfg.policy, cfg.capacity, cfg.window, downstream, library),
            fib,
            pit: HashMap::new(),
            lifetime: cfg.interest_lifetime,
            counters: RouterCounters::default(),
            next_tag: 0,
            audit: None,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn csm(&self) -> &Csm {
        &self.csm
    }

    pub fn csm_mut(&mut self) -> &mut Csm {
        &mut self.csm
    }

    pub fn fib(&self) -> &Fib {
        &self.fib
    }

    pub fn counters(&self) -> &RouterCounters {
        &self.counters
    }

    pub fn pit_entry(&self, prefix: &NamePrefix) -> Option<&PitEntry> {
        self.pit.get(prefix)
    }

    pub fn pit_len(&self) -> usize {
        self.pit.len()
    }

    pub fn enable_audit(&mut self) {
        self.audit.get_or_insert_with(HashMap::new);
    }

    /// True when no face received more Data for a prefix than it asked for.
    pub fn audit_ok(&self) -> bool {
        self.audit
            .as_ref()
            .is_none_or(|m| m.values().all(|(asked, sent)| sent <= asked))
    }

    fn stamp(&mut self, p: &mut CodedPacket) {
        self.next_tag += 1;
        p.tag = ((self.id as u64 + 1) << 40) | self.next_tag;
    }

    fn audit_interest(&mut self, face: FaceId, prefix: &NamePrefix) {
        if let Some(m) = self.audit.as_mut() {
            m.entry((face, prefix.clone())).or_default().0 += 1;
        }
    }

    fn send_data(&mut self, face: FaceId, p: CodedPacket, out: &mut Vec<Emission>) {
        if let Some(m) = self.audit.as_mut() {
            m.entry((face, p.prefix.clone())).or_default().1 += 1;
        }
        self.counters.data_sent += 1;
        out.push(Emission {
            face,
            packet: Packet::Data(p),
        });
    }

    fn purge(&mut self, prefix: &NamePrefix, t: SimTime) {
        if let Some(e) = self.pit.get_mut(prefix) {
            let (p, u) = e.purge(t, self.lifetime);
            self.counters.expired_pending += p as u64;
            self.counters.expired_outstanding += u as u64;
            if e.is_empty() {
                self.pit.remove(prefix);
            }
        }
    }

    pub fn on_interest<R: Rng + ?Sized>(
        &mut self,
        face: FaceId,
        interest: Interest,
        t: SimTime,
        rng: &mut R,
    ) -> (Vec<Emission>, InterestOutcome) {
        self.counters.interests_received += 1;
        let prefix = interest.prefix.clone();
        self.audit_interest(face, &prefix);
        self.purge(&prefix, t);
        let will_aggregate = self.pit.get(&prefix).is_some_and(|e| e.would_aggregate(face));
        let mut out = Vec::new();
        match self.csm.process_interest(interest, face, will_aggregate, t, rng) {
            CsmDecision::ReplyData(mut p) => {
                self.stamp(&mut p);
                self.send_data(face, p, &mut out);
                self.counters.cs_hits += 1;
                (out, InterestOutcome::CsHit)
            }
            CsmDecision::ForwardInterest { interest, caching_down_set } => {
                if will_aggregate && !caching_down_set {
                    self.pit.entry(prefix).or_default().add_pending(face, t);
                    self.counters.aggregated += 1;
                    return (out, InterestOutcome::Aggregated);
                }
                match self.fib.next_face(&prefix, rng) {
                    Ok(up) => {
                        let e = self.pit.entry(prefix).or_default();
                        e.add_pending(face, t);
                        e.outstanding_up.push_back(t);
                        out.push(Emission {
                            face: up,
                            packet: Packet::Interest(interest),
                        });
                        self.counters.forwarded += 1;
                        (out, InterestOutcome::Forwarded)
                    }
                    Err(_) => {
                        if caching_down_set {
                            self.csm.unmark(&prefix);
                        }
                        self.counters.dropped += 1;
                        (out, InterestOutcome::Dropped)
                    }
                }
            }
        }
    }

    /// Sends `p` on `face`, counting it against the store entry when the
    /// packet lies in the entry's row space.
    fn send_counted(&mut self, face: FaceId, p: CodedPacket, out: &mut Vec<Emission>) {
        if self.csm.store().in_row_space(&p) {
            self.csm.store_mut().note_sent(&p.prefix, face);
        }
        self.send_data(face, p, out);
    }

    pub fn on_data<R: Rng + ?Sized>(
        &mut self,
        _face: FaceId,
        p: CodedPacket,
        t: SimTime,
        rng: &mut R,
    ) -> Result<(Vec<Emission>, DataDisposition)> {
        self.counters.data_received += 1;
        let prefix = p.prefix.clone();
        self.purge(&prefix, t);
        let Some(entry) = self.pit.get_mut(&prefix) else {
            self.counters.unsolicited += 1;
            return Ok((Vec::new(), DataDisposition::Unsolicited));
        };
        entry.outstanding_up.pop_front();
        let faces = entry.pending_faces();
        if entry.is_empty() {
            self.pit.remove(&prefix);
        }
        if faces.is_empty() && !self.csm.store().is_innovative(&p) {
            self.counters.duplicates += 1;
            return Ok((Vec::new(), DataDisposition::Duplicate));
        }

        let outcome = self.csm.process_data(p, t, rng)?;
        let mut base = outcome.packet;
        if outcome.from_store {
            self.stamp(&mut base);
        }
        let mut out = Vec::new();
        for (i, &f) in faces.iter().enumerate() {
            // Extra faces get fresh recodes only when the store covers the
            // packet; otherwise a recode could miss what the packet adds.
            let fresh = if i > 0 && self.csm.store().in_row_space(&base) {
                self.csm.store_mut().emit(&prefix, Some(f), rng)
            } else {
                None
            };
            match fresh {
                Some(mut fresh) => {
                    fresh.cached_up = base.cached_up || outcome.from_store;
                    self.stamp(&mut fresh);
                    self.send_data(f, fresh, &mut out);
                }
                None => self.send_counted(f, base.clone(), &mut out),
            }
            self.pop_pending(&prefix, f);
        }

        // Remaining demand the store can still satisfy innovatively.
        if let Some(entry) = self.pit.get(&prefix) {
            for f in entry.pending_faces() {
                while self.pit.get(&prefix).is_some_and(|e| e.pending(f) > 0) && self.csm.store().xi(&prefix, f) > 0 {
                    let mut served = self.csm.store_mut().serve(&prefix, f, rng)?;
                    self.stamp(&mut served);
                    self.send_data(f, served, &mut out);
                    self.pop_pending(&prefix, f);
                }
            }
        }
        let sent = out.len();
        Ok((out, DataDisposition::Delivered { sent }))
    }

    fn pop_pending(&mut self, prefix: &NamePrefix, face: FaceId) {
        if let Some(e) = self.pit.get_mut(prefix) {
            e.pop_pending(face);
            if e.is_empty() {
                self.pit.remove(prefix);
            }
        }
    }
}
