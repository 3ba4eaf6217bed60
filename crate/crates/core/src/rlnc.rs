//! Random linear network coding over GF(2^8).
//!
//! A coded packet carries its coefficient vector relative to the source
//! packets of its generation. Source packets are coded packets with unit
//! coefficient vectors, so sources, routers and clients share one type.

use rand::Rng;

use crate::catalog::NamePrefix;
use crate::error::{Error, Result};
use crate::gf256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedPacket {
    pub prefix: NamePrefix,
    pub coeffs: Vec<u8>,
    pub payload: Vec<u8>,
    pub cached_up: bool,
    /// Emission tag stamped by the node that produced this combination.
    /// Not part of the code; used for tracing packets through the network.
    pub tag: u64,
}

impl CodedPacket {
    /// Source packet `index` of a generation of `generation_size` packets.
    pub fn source(prefix: NamePrefix, index: usize, generation_size: usize, payload: Vec<u8>) -> Self {
        let mut coeffs = vec![0u8; generation_size];
        coeffs[index] = 1;
        CodedPacket {
            prefix,
            coeffs,
            payload,
            cached_up: false,
            tag: 0,
        }
    }

    pub fn generation_size(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedRow {
    pub coeffs: Vec<u8>,
    pub payload: Vec<u8>,
}

impl From<CodedPacket> for CodedRow {
    fn from(p: CodedPacket) -> Self {
        CodedRow {
            coeffs: p.coeffs,
            payload: p.payload,
        }
    }
}

/// Row-echelon basis over the coefficient columns, carrying payload bytes
/// alongside. Each stored row is normalized to 1 at its pivot and is zero
/// left of it.
#[derive(Clone, Debug)]
pub struct EchelonBasis {
    width: usize,
    payload_len: usize,
    rows: Vec<Vec<u8>>,
    pivot_row: Vec<Option<usize>>,
}

impl EchelonBasis {
    pub fn new(width: usize, payload_len: usize) -> Self {
        EchelonBasis {
            width,
            payload_len,
            rows: Vec::new(),
            pivot_row: vec![None; width],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.width
    }

    /// Eliminates `v` (coefficients only, or coefficients followed by
    /// payload) against the basis. Returns the first nonzero column left.
    fn reduce(&self, v: &mut [u8]) -> Option<usize> {
        let span = v.len();
        for col in 0..self.width {
            let c = v[col];
            if c == 0 {
                continue;
            }
            match self.pivot_row[col] {
                Some(r) => gf256::mul_add_slice(&mut v[col..], &self.rows[r][col..span], c),
                None => return Some(col),
            }
        }
        None
    }

    /// True iff `coeffs` lies outside the span of the basis.
    pub fn would_grow(&self, coeffs: &[u8]) -> bool {
        if self.is_full() {
            return false;
        }
        let mut v = coeffs.to_vec();
        self.reduce(&mut v).is_some()
    }

    /// Adds a row if it is innovative. Returns whether the rank grew.
    pub fn insert(&mut self, coeffs: &[u8], payload: &[u8]) -> bool {
        debug_assert_eq!(coeffs.len(), self.width);
        if self.is_full() {
            return false;
        }
        let mut v = Vec::with_capacity(self.width + self.payload_len);
        v.extend_from_slice(coeffs);
        v.extend_from_slice(&payload[..self.payload_len]);
        match self.reduce(&mut v) {
            None => false,
            Some(col) => {
                let scale = gf256::inv(v[col]).expect("pivot is nonzero");
                gf256::scale_slice(&mut v[col..], scale);
                self.pivot_row[col] = Some(self.rows.len());
                self.rows.push(v);
                true
            }
        }
    }

    /// Back-substitutes to reduced form and returns the payload of each
    /// source packet in index order.
    pub fn solve(mut self) -> Result<Vec<Vec<u8>>> {
        if !self.is_full() {
            return Err(Error::RankDeficient {
                rank: self.rank(),
                needed: self.width,
            });
        }
        for col in (0..self.width).rev() {
            let r = self.pivot_row[col].expect("full rank");
            let pivot = std::mem::take(&mut self.rows[r]);
            for (k, row) in self.rows.iter_mut().enumerate() {
                if k == r {
                    continue;
                }
                let c = row[col];
                if c != 0 {
                    gf256::mul_add_slice(&mut row[col..], &pivot[col..], c);
                }
            }
            self.rows[r] = pivot;
        }
        let w = self.width;
        Ok((0..w)
            .map(|col| self.rows[self.pivot_row[col].unwrap()][w..].to_vec())
            .collect())
    }
}

/// The coded packets held for one generation.
#[derive(Clone, Debug)]
pub struct CodingMatrix {
    prefix: NamePrefix,
    width: usize,
    payload_len: usize,
    rows: Vec<CodedRow>,
    /// Rows are exactly the unit vectors e_0..e_{n-1} in order.
    identity: bool,
}

impl CodingMatrix {
    pub fn new(prefix: NamePrefix, width: usize, payload_len: usize) -> Self {
        CodingMatrix {
            prefix,
            width,
            payload_len,
            rows: Vec::new(),
            identity: true,
        }
    }

    /// Full-rank matrix of source packets with unit coefficient vectors.
    pub fn from_source_payloads(prefix: NamePrefix, payloads: Vec<Vec<u8>>) -> Result<Self> {
        let width = payloads.len();
        let payload_len = payloads.first().map_or(0, Vec::len);
        let mut m = CodingMatrix::new(prefix.clone(), width, payload_len);
        for (j, payload) in payloads.into_iter().enumerate() {
            m.push(CodedPacket::source(prefix.clone(), j, width, payload).into())?;
        }
        Ok(m)
    }

    pub fn prefix(&self) -> &NamePrefix {
        &self.prefix
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn payload_len(&self) -> usize {
        self.payload_len
    }

    pub fn rows(&self) -> &[CodedRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn check_dims(&self, coeffs: usize, payload: usize) -> Result<()> {
        if coeffs != self.width || payload != self.payload_len {
            return Err(Error::DimensionMismatch {
                expected: self.width,
                expected_payload: self.payload_len,
                got: coeffs,
                got_payload: payload,
            });
        }
        Ok(())
    }

    /// Appends a row without checking innovativeness.
    pub fn push(&mut self, row: CodedRow) -> Result<()> {
        self.check_dims(row.coeffs.len(), row.payload.len())?;
        if self.rows.len() >= self.width {
            return Err(Error::config("coding matrix cannot hold more rows than its generation size"));
        }
        let n = self.rows.len();
        self.identity &= row.coeffs.iter().enumerate().all(|(i, &c)| c == u8::from(i == n));
        self.rows.push(row);
        Ok(())
    }

    pub fn swap_remove(&mut self, index: usize) -> CodedRow {
        self.identity = false;
        self.rows.swap_remove(index)
    }

    /// Coefficient-only echelon basis of the rows.
    pub fn coefficient_basis(&self) -> EchelonBasis {
        let mut b = EchelonBasis::new(self.width, 0);
        for row in &self.rows {
            b.insert(&row.coeffs, &[]);
        }
        b
    }

    pub fn rank(&self) -> usize {
        if self.identity {
            return self.rows.len();
        }
        self.coefficient_basis().rank()
    }

    pub fn is_innovative(&self, p: &CodedPacket) -> Result<bool> {
        self.check_dims(p.coeffs.len(), p.payload.len())?;
        Ok(self.coefficient_basis().would_grow(&p.coeffs))
    }

    /// `Σ a_j · row_j` over coefficients and payload.
    pub fn combine(&self, weights: &[u8]) -> CodedPacket {
        debug_assert_eq!(weights.len(), self.rows.len());
        let mut coeffs = vec![0u8; self.width];
        let mut payload = vec![0u8; self.payload_len];
        if self.identity {
            coeffs[..weights.len()].copy_from_slice(weights);
        }
        for (row, &a) in self.rows.iter().zip(weights) {
            if !self.identity {
                gf256::mul_add_slice(&mut coeffs, &row.coeffs, a);
            }
            gf256::mul_add_slice(&mut payload, &row.payload, a);
        }
        CodedPacket {
            prefix: self.prefix.clone(),
            coeffs,
            payload,
            cached_up: false,
            tag: 0,
        }
    }

    /// Random combination of all rows with uniform weights; an all-zero
    /// coefficient vector is redrawn.
    pub fn recode<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CodedPacket> {
        if self.rows.iter().all(|r| r.coeffs.iter().all(|&c| c == 0)) {
            return Err(Error::EmptyMatrix);
        }
        let mut weights = vec![0u8; self.rows.len()];
        loop {
            rng.fill(&mut weights[..]);
            let p = self.combine(&weights);
            if !p.is_zero() {
                return Ok(p);
            }
        }
    }

    /// Recovers the source payloads by Gauss-Jordan elimination.
    pub fn decode(&self) -> Result<Vec<Vec<u8>>> {
        let mut b = EchelonBasis::new(self.width, self.payload_len);
        for row in &self.rows {
            b.insert(&row.coeffs, &row.payload);
        }
        b.solve()
    }
}

pub fn rank(m: &CodingMatrix) -> usize {
    m.rank()
}

pub fn is_innovative(m: &CodingMatrix, p: &CodedPacket) -> Result<bool> {
    m.is_innovative(p)
}

pub fn recode<R: Rng + ?Sized>(m: &CodingMatrix, rng: &mut R) -> Result<CodedPacket> {
    m.recode(rng)
}

pub fn decode(m: &CodingMatrix) -> Result<Vec<Vec<u8>>> {
    m.decode()
}

/// Incremental decoder used by receivers: keeps payloads in echelon form so
/// the final solve is a back-substitution.
#[derive(Clone, Debug)]
pub struct Decoder {
    basis: EchelonBasis,
}

impl Decoder {
    pub fn new(generation_size: usize, payload_len: usize) -> Self {
        Decoder {
            basis: EchelonBasis::new(generation_size, payload_len),
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn generation_size(&self) -> usize {
        self.basis.width()
    }

    pub fn is_complete(&self) -> bool {
        self.basis.is_full()
    }

    pub fn push(&mut self, p: &CodedPacket) -> Result<bool> {
        if p.coeffs.len() != self.basis.width || p.payload.len() != self.basis.payload_len {
            return Err(Error::DimensionMismatch {
                expected: self.basis.width,
                expected_payload: self.basis.payload_len,
                got: p.coeffs.len(),
                got_payload: p.payload.len(),
            });
        }
        Ok(self.basis.insert(&p.coeffs, &p.payload))
    }

    pub fn finish(self) -> Result<Vec<Vec<u8>>> {
        self.basis.solve()
    }
}
