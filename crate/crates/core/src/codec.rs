//! Canonical byte encodings shared by every hash input and wire format.
//!
//! Integers are unsigned big-endian with no leading zero bytes, prefixed by a
//! 4-byte big-endian length. Zero encodes as an empty body. Timestamps are the
//! one exception: a bare 8-byte big-endian tick count.

use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("input truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("integer encoding is not minimal")]
    NonCanonicalInteger,
    #[error("field has length {got}, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("{0} trailing bytes after the last field")]
    TrailingBytes(usize),
    #[error("value does not fit in 64 bits")]
    Overflow,
}

/// Appends `4-byte length ‖ bytes`.
pub fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    let len = u32::try_from(bytes.len()).expect("field longer than u32::MAX");
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(bytes);
}

/// Minimal big-endian body of `x`; empty for zero.
pub fn uint_body(x: &BigUint) -> Vec<u8> {
    if x.bits() == 0 {
        Vec::new()
    } else {
        x.to_bytes_be()
    }
}

pub fn put_uint(out: &mut Vec<u8>, x: &BigUint) {
    put_bytes(out, &uint_body(x));
}

pub fn put_u64(out: &mut Vec<u8>, x: u64) {
    put_uint(out, &BigUint::from(x));
}

/// Canonical encoding of a big integer.
pub fn encode_uint(x: &BigUint) -> Vec<u8> {
    let mut out = Vec::new();
    put_uint(&mut out, x);
    out
}

/// Canonical encoding of a machine integer (task index, token index, counts).
pub fn encode_u64(x: u64) -> Vec<u8> {
    encode_uint(&BigUint::from(x))
}

/// Timestamp encoding: 8-byte big-endian tick count.
pub fn encode_tick(tick: u64) -> [u8; 8] {
    tick.to_be_bytes()
}

/// Cursor over a canonical byte string.
#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated {
                needed: n,
                available: self.remaining(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().unwrap()) as usize;
        self.take(len)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let body = self.bytes()?;
        body.try_into().map_err(|_| CodecError::WrongLength {
            expected: N,
            got: body.len(),
        })
    }

    pub fn uint(&mut self) -> Result<BigUint, CodecError> {
        let body = self.bytes()?;
        if body.first() == Some(&0) {
            return Err(CodecError::NonCanonicalInteger);
        }
        Ok(BigUint::from_bytes_be(body))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        let x = self.uint()?;
        u64::try_from(&x).map_err(|_| CodecError::Overflow)
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_integers_have_fixed_layout() {
        assert_eq!(encode_u64(0), vec![0, 0, 0, 0]);
        assert_eq!(encode_u64(1), vec![0, 0, 0, 1, 1]);
        assert_eq!(encode_u64(256), vec![0, 0, 0, 2, 1, 0]);
        assert_eq!(encode_tick(5), [0, 0, 0, 0, 0, 0, 0, 5]);
    }

    #[test]
    fn leading_zero_rejected() {
        let mut r = Reader::new(&[0, 0, 0, 2, 0, 7]);
        assert_eq!(r.uint(), Err(CodecError::NonCanonicalInteger));
    }

    #[test]
    fn truncated_length_prefix() {
        let mut r = Reader::new(&[0, 0, 0, 9, 1, 2]);
        assert!(matches!(r.bytes(), Err(CodecError::Truncated { .. })));
    }

    #[test]
    fn trailing_bytes_detected() {
        let mut r = Reader::new(&[0, 0, 0, 1, 3, 9]);
        assert_eq!(r.u64().unwrap(), 3);
        assert_eq!(r.finish(), Err(CodecError::TrailingBytes(1)));
    }
}
