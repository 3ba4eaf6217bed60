//! Limited-capacity coded content store.
//!
//! Each entry holds the coded packets of one generation plus, for every face,
//! the number of packets generated from the entry that were sent over it.
//! `xi = rank - sigma` is the number of replies the store can still produce
//! that are likely innovative for the neighbor behind a face.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::Rng;

use crate::catalog::NamePrefix;
use crate::error::{Error, Result};
use crate::rlnc::{CodedPacket, CodingMatrix, EchelonBasis};
use crate::types::FaceId;

#[derive(Clone, Debug)]
pub struct CsEntry {
    matrix: CodingMatrix,
    basis: EchelonBasis,
    sigma: BTreeMap<FaceId, usize>,
}

impl CsEntry {
    pub fn new(prefix: NamePrefix, generation_size: usize, payload_len: usize) -> Self {
        CsEntry {
            matrix: CodingMatrix::new(prefix, generation_size, payload_len),
            basis: EchelonBasis::new(generation_size, 0),
            sigma: BTreeMap::new(),
        }
    }

    pub fn prefix(&self) -> &NamePrefix {
        self.matrix.prefix()
    }

    pub fn matrix(&self) -> &CodingMatrix {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn sigma(&self, face: FaceId) -> usize {
        self.sigma.get(&face).copied().unwrap_or(0)
    }

    pub fn set_sigma(&mut self, face: FaceId, value: usize) {
        self.sigma.insert(face, value.min(self.rank()));
    }

    pub fn xi(&self, face: FaceId) -> usize {
        self.rank().saturating_sub(self.sigma(face))
    }

    pub fn is_innovative(&self, p: &CodedPacket) -> bool {
        p.coeffs.len() == self.basis.width() && self.basis.would_grow(&p.coeffs)
    }

    /// Counts one packet from this entry's row space as sent over `face`.
    pub fn note_sent(&mut self, face: FaceId) {
        let rank = self.rank();
        let s = self.sigma.entry(face).or_insert(0);
        *s = (*s + 1).min(rank);
    }

    fn push_innovative(&mut self, p: CodedPacket) -> Result<bool> {
        if !self.is_innovative(&p) {
            return Ok(false);
        }
        self.basis.insert(&p.coeffs, &[]);
        self.matrix.push(p.into())?;
        Ok(true)
    }

    fn remove_random_rows<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> usize {
        let k = k.min(self.matrix.len());
        if k == 0 {
            return 0;
        }
        let mut idx = sample(rng, self.matrix.len(), k).into_vec();
        // swap_remove from the highest index down keeps the rest valid
        idx.sort_unstable_by(|a, b| b.cmp(a));
        for i in idx {
            self.matrix.swap_remove(i);
        }
        self.basis = self.matrix.coefficient_basis();
        for s in self.sigma.values_mut() {
            *s = s.saturating_sub(k);
        }
        k
    }
}

pub fn xi(e: &CsEntry, f: FaceId) -> usize {
    e.xi(f)
}

#[derive(Clone, Debug)]
pub struct ContentStore {
    capacity: Option<usize>,
    entries: HashMap<NamePrefix, CsEntry>,
    occupancy: usize,
}

impl ContentStore {
    /// Store holding at most `capacity` packets.
    pub fn with_capacity(capacity: usize) -> Self {
        ContentStore {
            capacity: Some(capacity),
            entries: HashMap::new(),
            occupancy: 0,
        }
    }

    pub fn unlimited() -> Self {
        ContentStore {
            capacity: None,
            entries: HashMap::new(),
            occupancy: 0,
        }
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn occupancy(&self) -> usize {
        self.occupancy
    }

    pub fn is_full(&self) -> bool {
        self.capacity.is_some_and(|m| self.occupancy >= m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, prefix: &NamePrefix) -> Option<&CsEntry> {
        self.entries.get(prefix)
    }

    pub fn entry_mut(&mut self, prefix: &NamePrefix) -> Option<&mut CsEntry> {
        self.entries.get_mut(prefix)
    }

    /// Prefixes with an entry, sorted.
    pub fn prefixes(&self) -> Vec<NamePrefix> {
        let mut v: Vec<_> = self.entries.keys().cloned().collect();
        v.sort();
        v
    }

    pub fn rank(&self, prefix: &NamePrefix) -> usize {
        self.entries.get(prefix).map_or(0, CsEntry::rank)
    }

    pub fn xi(&self, prefix: &NamePrefix, face: FaceId) -> usize {
        self.entries.get(prefix).map_or(0, |e| e.xi(face))
    }

    /// Whether `p` would raise the rank of its entry (true without an entry).
    pub fn is_innovative(&self, p: &CodedPacket) -> bool {
        self.entries.get(&p.prefix).is_none_or(|e| e.is_innovative(p))
    }

    /// Whether `p` lies in the span of its (existing) entry.
    pub fn in_row_space(&self, p: &CodedPacket) -> bool {
        self.entries.get(&p.prefix).is_some_and(|e| !e.is_innovative(p))
    }

    /// Replies to an Interest from `face` with a fresh recode. Requires xi > 0.
    pub fn serve<R: Rng + ?Sized>(&mut self, prefix: &NamePrefix, face: FaceId, rng: &mut R) -> Result<CodedPacket> {
        let e = self
            .entries
            .get_mut(prefix)
            .filter(|e| e.xi(face) > 0)
            .ok_or_else(|| Error::NothingToServe(prefix.to_string()))?;
        let p = e.matrix.recode(rng)?;
        e.note_sent(face);
        Ok(p)
    }

    /// Fresh recode of the entry, counted against `face` but without the
    /// xi precondition. `None` when no entry exists.
    pub fn emit<R: Rng + ?Sized>(&mut self, prefix: &NamePrefix, face: Option<FaceId>, rng: &mut R) -> Option<CodedPacket> {
        let e = self.entries.get_mut(prefix)?;
        let p = e.matrix.recode(rng).ok()?;
        if let Some(f) = face {
            e.note_sent(f);
        }
        Some(p)
    }

    pub fn note_sent(&mut self, prefix: &NamePrefix, face: FaceId) {
        if let Some(e) = self.entries.get_mut(prefix) {
            e.note_sent(face);
        }
    }

    /// Inserts `p` if it is innovative for its entry. The caller must make
    /// room first.
    pub fn insert(&mut self, p: CodedPacket) -> Result<bool> {
        if self.is_full() {
            return Err(Error::CapacityExceeded);
        }
        let e = match self.entries.get_mut(&p.prefix) {
            Some(e) => e,
            None => {
                if p.is_zero() {
                    return Ok(false);
                }
                let prefix = p.prefix.clone();
                self.entries
                    .entry(prefix.clone())
                    .or_insert_with(|| CsEntry::new(prefix, p.coeffs.len(), p.payload.len()))
            }
        };
        let added = e.push_innovative(p)?;
        if added {
            self.occupancy += 1;
        }
        Ok(added)
    }

    /// Removes up to `k` random rows of an entry. Every removed row lowers
    /// each face counter by one, floored at zero.
    pub fn evict<R: Rng + ?Sized>(&mut self, prefix: &NamePrefix, k: usize, rng: &mut R) -> usize {
        let Some(e) = self.entries.get_mut(prefix) else {
            return 0;
        };
        let removed = e.remove_random_rows(k, rng);
        self.occupancy -= removed;
        if e.rows() == 0 {
            self.entries.remove(prefix);
        }
        removed
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.occupancy = 0;
    }

    #[cfg(test)]
    pub(crate) fn check_invariants(&self) {
        let rows: usize = self.entries.values().map(CsEntry::rows).sum();
        assert_eq!(rows, self.occupancy);
        if let Some(m) = self.capacity {
            assert!(self.occupancy <= m);
        }
        for e in self.entries.values() {
            assert!(e.rows() > 0);
            assert_eq!(e.rank(), e.rows());
            assert!(e.rank() <= e.matrix.width());
            for f in e.sigma.keys() {
                assert!(e.sigma(*f) <= e.rank());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pfx(g: u32) -> NamePrefix {
        NamePrefix::new("obj", g)
    }

    fn random_packet(rng: &mut ChaCha8Rng, g: u32, width: usize) -> CodedPacket {
        let mut coeffs = vec![0u8; width];
        rng.fill(&mut coeffs[..]);
        CodedPacket {
            prefix: pfx(g),
            coeffs,
            payload: vec![rng.gen(), rng.gen()],
            cached_up: false,
            tag: 0,
        }
    }

    fn store_with_rank(rank: usize, rng: &mut ChaCha8Rng) -> ContentStore {
        let mut cs = ContentStore::with_capacity(100);
        while cs.rank(&pfx(0)) < rank {
            let p = random_packet(rng, 0, 8);
            cs.insert(p).unwrap();
        }
        cs
    }

    #[test]
    fn xi_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cs = store_with_rank(5, &mut rng);
        let e = cs.entry_mut(&pfx(0)).unwrap();
        e.set_sigma(FaceId(1), 2);
        assert_eq!(xi(e, FaceId(1)), 3);
        assert_eq!(xi(e, FaceId(9)), 5);
        let empty = CsEntry::new(pfx(1), 8, 2);
        assert_eq!(empty.xi(FaceId(0)), 0);
        let mut cs = store_with_rank(4, &mut rng);
        let e = cs.entry_mut(&pfx(0)).unwrap();
        e.set_sigma(FaceId(1), 4);
        assert_eq!(e.xi(FaceId(1)), 0);
    }

    #[test]
    fn serve_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cs = store_with_rank(3, &mut rng);
        let f = FaceId(0);
        let p = cs.serve(&pfx(0), f, &mut rng).unwrap();
        assert_eq!(cs.entry(&pfx(0)).unwrap().sigma(f), 1);
        assert_eq!(cs.xi(&pfx(0), f), 2);
        assert!(cs.in_row_space(&p));
        cs.serve(&pfx(0), f, &mut rng).unwrap();
        cs.serve(&pfx(0), f, &mut rng).unwrap();
        assert_eq!(cs.xi(&pfx(0), f), 0);
        assert!(matches!(cs.serve(&pfx(0), f, &mut rng), Err(Error::NothingToServe(_))));
        // another face is unaffected
        assert_eq!(cs.xi(&pfx(0), FaceId(1)), 3);
    }

    #[test]
    fn served_packets_span_at_most_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cs = store_with_rank(3, &mut rng);
        let mut span = CodingMatrix::new(pfx(0), 8, 2);
        for i in 0..3 {
            let p = cs.serve(&pfx(0), FaceId(i), &mut rng).unwrap();
            span.push(p.into()).unwrap();
        }
        for i in 3..6 {
            let p = cs.serve(&pfx(0), FaceId(i), &mut rng).unwrap();
            span.push(p.into()).unwrap();
        }
        assert!(span.rank() <= 3);
    }

    #[test]
    fn insert_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cs = ContentStore::with_capacity(10);
        let p = random_packet(&mut rng, 0, 4);
        assert!(cs.insert(p.clone()).unwrap());
        assert_eq!(cs.occupancy(), 1);
        assert!(!cs.insert(p).unwrap());
        assert_eq!(cs.occupancy(), 1);
        while cs.rank(&pfx(0)) < 4 {
            cs.insert(random_packet(&mut rng, 0, 4)).unwrap();
        }
        let before = cs.occupancy();
        assert!(!cs.insert(random_packet(&mut rng, 0, 4)).unwrap());
        assert_eq!(cs.occupancy(), before);
    }

    #[test]
    fn insert_at_capacity_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cs = ContentStore::with_capacity(1);
        cs.insert(random_packet(&mut rng, 0, 4)).unwrap();
        assert!(matches!(
            cs.insert(random_packet(&mut rng, 1, 4)),
            Err(Error::CapacityExceeded)
        ));
        let mut none = ContentStore::with_capacity(0);
        assert!(none.insert(random_packet(&mut rng, 0, 4)).is_err());
    }

    #[test]
    fn evict_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut cs = store_with_rank(4, &mut rng);
        {
            let e = cs.entry_mut(&pfx(0)).unwrap();
            e.set_sigma(FaceId(0), 3);
            e.set_sigma(FaceId(1), 1);
            e.set_sigma(FaceId(2), 0);
        }
        assert_eq!(cs.evict(&pfx(0), 2, &mut rng), 2);
        assert_eq!(cs.occupancy(), 2);
        let e = cs.entry(&pfx(0)).unwrap();
        assert_eq!(e.rank(), 2);
        assert_eq!(e.sigma(FaceId(0)), 1);
        assert_eq!(e.sigma(FaceId(1)), 0);
        assert_eq!(e.sigma(FaceId(2)), 0);
        assert_eq!(cs.evict(&pfx(0), 10, &mut rng), 2);
        assert!(cs.entry(&pfx(0)).is_none());
        assert_eq!(cs.occupancy(), 0);
        assert_eq!(cs.evict(&pfx(7), 3, &mut rng), 0);
        cs.check_invariants();
    }

    #[test]
    fn rows_are_reinsertable_after_eviction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut cs = store_with_rank(8, &mut rng);
        cs.evict(&pfx(0), 3, &mut rng);
        assert_eq!(cs.rank(&pfx(0)), 5);
        while cs.rank(&pfx(0)) < 8 {
            cs.insert(random_packet(&mut rng, 0, 8)).unwrap();
        }
        cs.check_invariants();
    }

    #[test]
    fn fuzzed_operations_keep_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut cs = ContentStore::with_capacity(30);
        for step in 0..12_000 {
            let g = rng.gen_range(0..6);
            match rng.gen_range(0..4) {
                0 | 1 => {
                    if cs.is_full() {
                        let victim = cs.prefixes()[0].clone();
                        cs.evict(&victim, 1, &mut rng);
                    }
                    cs.insert(random_packet(&mut rng, g, 6)).unwrap();
                }
                2 => {
                    let k = rng.gen_range(0..4);
                    cs.evict(&pfx(g), k, &mut rng);
                }
                _ => {
                    let f = FaceId(rng.gen_range(0..3));
                    let before = cs.xi(&pfx(g), f);
                    match cs.serve(&pfx(g), f, &mut rng) {
                        Ok(_) => assert_eq!(cs.xi(&pfx(g), f), before - 1),
                        Err(_) => assert_eq!(before, 0),
                    }
                }
            }
            if step % 97 == 0 {
                cs.check_invariants();
            }
        }
        cs.check_invariants();
    }
}
