//! Arithmetic over GF(2^8).
//!
//! Elements are bytes interpreted as polynomials over GF(2), reduced modulo
//! x^8 + x^4 + x^3 + x + 1 (0x11B). Addition is XOR. Multiplication goes
//! through log/antilog tables built once from the generator 0x03, and the
//! bulk row kernels use a full 256x256 product table derived from them.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign};
use std::sync::LazyLock;

use crate::error::Error;

/// Low byte of the reduction polynomial x^8 + x^4 + x^3 + x + 1.
pub const POLY: u8 = 0x1B;

/// Primitive element used to build the log tables. For 0x11B, `x` (0x02)
/// has order 51, so `x + 1` is the usual choice.
pub const GENERATOR: u8 = 0x03;

struct Tables {
    log: [u8; 256],
    exp: [u8; 510],
    mul: Box<[[u8; 256]; 256]>,
}

static TABLES: LazyLock<Tables> = LazyLock::new(build_tables);

fn build_tables() -> Tables {
    let mut log = [0u8; 256];
    let mut exp = [0u8; 510];
    let mut x: u8 = 1;
    for i in 0..255 {
        exp[i] = x;
        exp[i + 255] = x;
        log[x as usize] = i as u8;
        x = mul_slow(x, GENERATOR);
    }
    let mut mul = Box::new([[0u8; 256]; 256]);
    for a in 1..256usize {
        for b in 1..256usize {
            mul[a][b] = exp[log[a] as usize + log[b] as usize];
        }
    }
    Tables { log, exp, mul }
}

/// Forces table construction. Calling it is optional.
pub fn init() {
    LazyLock::force(&TABLES);
}

/// Carry-less shift-and-reduce multiplication. Independent of the tables.
pub const fn mul_slow(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= POLY;
        }
        b >>= 1;
    }
    acc
}

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    TABLES.mul[a as usize][b as usize]
}

/// Table-driven product through the log/antilog pair.
pub fn mul_log(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    let t = &*TABLES;
    t.exp[t.log[a as usize] as usize + t.log[b as usize] as usize]
}

pub fn inv(a: u8) -> Result<u8, Error> {
    if a == 0 {
        return Err(Error::ZeroInverse);
    }
    let t = &*TABLES;
    Ok(t.exp[(255 - t.log[a as usize] as usize) % 255])
}

/// `dst[i] ^= c * src[i]` for every index.
pub fn mul_add_slice(dst: &mut [u8], src: &[u8], c: u8) {
    debug_assert_eq!(dst.len(), src.len());
    match c {
        0 => {}
        1 => {
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= *s;
            }
        }
        _ => {
            let row = &TABLES.mul[c as usize];
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= row[*s as usize];
            }
        }
    }
}

/// `buf[i] = c * buf[i]` for every index.
pub fn scale_slice(buf: &mut [u8], c: u8) {
    if c == 1 {
        return;
    }
    let row = &TABLES.mul[c as usize];
    for b in buf.iter_mut() {
        *b = row[*b as usize];
    }
}

/// An element of GF(2^8).
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn inv(self) -> Result<FieldElement, Error> {
        inv(self.0).map(FieldElement)
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for FieldElement {
    fn from(v: u8) -> Self {
        FieldElement(v)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: FieldElement) -> FieldElement {
        FieldElement(add(self.0, rhs.0))
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: FieldElement) {
        *self = *self + rhs;
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: FieldElement) -> FieldElement {
        FieldElement(mul(self.0, rhs.0))
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: FieldElement) {
        *self = *self * rhs;
    }
}
