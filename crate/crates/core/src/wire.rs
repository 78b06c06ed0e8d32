//! Canonical binary encoding for message payloads.
//!
//! Integers are big-endian. A rational is a sign byte (0 for non-negative,
//! 1 for negative) followed by the numerator magnitude and the denominator,
//! each as a u32 length prefix plus big-endian bytes. Since rationals are
//! kept in lowest terms, equal values always encode to equal bytes.

use num_bigint::{BigInt, BigUint, Sign};
use thiserror::Error;

use crate::geom::{Rational, RationalPoint};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("payload truncated at byte {0}")]
    Truncated(usize),
    #[error("invalid {what} at byte {at}")]
    Invalid { what: &'static str, at: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
        self
    }

    pub fn rational(&mut self, v: &Rational) -> &mut Self {
        self.u8(u8::from(v.numer().sign() == Sign::Minus));
        let numer = v.numer().magnitude().to_bytes_be();
        let denom = v.denom().magnitude().to_bytes_be();
        self.bytes(&numer).bytes(&denom)
    }

    pub fn point(&mut self, p: &RationalPoint) -> &mut Self {
        self.u32(p.dim() as u32);
        for c in p.coords() {
            self.rational(c);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or(WireError::Truncated(self.pos))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn rational(&mut self) -> Result<Rational, WireError> {
        let at = self.pos;
        let negative = match self.u8()? {
            0 => false,
            1 => true,
            _ => return Err(WireError::Invalid { what: "sign byte", at }),
        };
        let numer = BigUint::from_bytes_be(self.bytes()?);
        let denom = BigUint::from_bytes_be(self.bytes()?);
        if denom == BigUint::from(0u8) {
            return Err(WireError::Invalid {
                what: "zero denominator",
                at,
            });
        }
        let sign = if negative { Sign::Minus } else { Sign::Plus };
        Ok(Rational::new(BigInt::from_biguint(sign, numer), BigInt::from(denom)))
    }

    pub fn point(&mut self) -> Result<RationalPoint, WireError> {
        let at = self.pos;
        let dim = self.u32()? as usize;
        if dim > self.buf.len() {
            return Err(WireError::Invalid { what: "dimension", at });
        }
        (0..dim)
            .map(|_| self.rational())
            .collect::<Result<Vec<_>, _>>()
            .map(RationalPoint::new)
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn finish(self) -> Result<(), WireError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            extra => Err(WireError::Trailing(extra)),
        }
    }
}
