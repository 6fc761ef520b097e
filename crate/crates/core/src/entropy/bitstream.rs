use crate::error::{Error, Result};

/// Bits packed MSB-first; pad bits in the last byte are zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitStream {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps packed bytes holding `bit_len` meaningful bits.
    pub fn from_bytes(bytes: Vec<u8>, bit_len: usize) -> Result<Self> {
        if bytes.len() != bit_len.div_ceil(8) {
            return Err(Error::Format(format!("{} bytes cannot hold exactly {bit_len} bits", bytes.len())));
        }
        let pad = bytes.len() * 8 - bit_len;
        if pad > 0 && bytes[bytes.len() - 1] & ((1u8 << pad) - 1) != 0 {
            return Err(Error::Format("nonzero pad bits".into()));
        }
        Ok(Self { bytes, bit_len })
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.bit_len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.bit_len % 8);
        }
        self.bit_len += 1;
    }

    /// Appends the low `len` bits of `code`, most significant first.
    pub fn push_bits(&mut self, code: u64, len: u32) {
        for i in (0..len).rev() {
            self.push_bit((code >> i) & 1 == 1);
        }
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bytes: &self.bytes, limit: self.bit_len, at: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    limit: usize,
    at: usize,
}

impl<'a> BitReader<'a> {
    /// Reads every bit of `bytes`.
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, limit: bytes.len() * 8, at: 0 }
    }

    pub fn position(&self) -> usize {
        self.at
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.at >= self.limit {
            return Err(Error::Truncated(format!("bitstream exhausted after {} bits", self.limit)));
        }
        let bit = self.bytes[self.at / 8] & (0x80 >> (self.at % 8)) != 0;
        self.at += 1;
        Ok(bit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first_packing() {
        let mut s = BitStream::new();
        s.push_bits(0b101, 3);
        s.push_bits(0b1, 1);
        assert_eq!(s.as_bytes(), &[0b1011_0000]);
        assert_eq!(s.bit_len(), 4);
        s.push_bits(0b1111_1, 5);
        assert_eq!(s.as_bytes(), &[0b1011_1111, 0b1000_0000]);
    }

    #[test]
    fn byte_length_is_ceiling() {
        let mut s = BitStream::new();
        for n in 0usize..40 {
            assert_eq!(s.as_bytes().len(), n.div_ceil(8));
            s.push_bit(n % 3 == 0);
        }
    }

    #[test]
    fn reader_round_trip_and_exhaustion() {
        let pattern: Vec<bool> = (0..19).map(|i| i % 5 < 2).collect();
        let mut s = BitStream::new();
        for &b in &pattern {
            s.push_bit(b);
        }
        let mut r = s.reader();
        for &b in &pattern {
            assert_eq!(r.read_bit().unwrap(), b);
        }
        assert!(matches!(r.read_bit(), Err(Error::Truncated(_))));
        let copy = BitStream::from_bytes(s.as_bytes().to_vec(), 19).unwrap();
        assert_eq!(copy, s);
    }

    #[test]
    fn dirty_padding_rejected() {
        assert!(BitStream::from_bytes(vec![0b1000_0001], 1).is_err());
        assert!(BitStream::from_bytes(vec![0, 0], 3).is_err());
    }
}
