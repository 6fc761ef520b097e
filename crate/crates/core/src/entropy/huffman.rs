//! Canonical Huffman codes over signed integer symbols.
//!
//! A serialized stream is
//!
//! ```text
//! n      u32      number of coded symbols
//! table  varint entry count, then per entry (zigzag symbol delta, u8 length)
//!        with symbols ascending
//! bits   codes packed MSB-first, zero padded to a byte
//! ```

use std::collections::{BTreeMap, HashMap};

use super::bitstream::{BitReader, BitStream};
use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};

const MAX_LEN: u8 = 63;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanTable {
    /// `(symbol, length)` sorted by symbol.
    lengths: Vec<(i64, u8)>,
    codes: HashMap<i64, (u64, u8)>,
    /// Symbols in canonical order `(length, symbol)`.
    canonical: Vec<i64>,
    /// Per length: (first code, index of first symbol in `canonical`, count).
    starts: Vec<(u64, usize, usize)>,
}

impl HuffmanTable {
    pub fn from_symbols(symbols: &[i64]) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for &s in symbols {
            *counts.entry(s).or_insert(0u64) += 1;
        }
        Self::from_counts(&counts)
    }

    /// Optimal code lengths for `counts`. Equal weights merge leaves before
    /// internal nodes and lower symbols first.
    pub fn from_counts(counts: &BTreeMap<i64, u64>) -> Result<Self> {
        if let Some((s, _)) = counts.iter().find(|(_, &c)| c == 0) {
            return Err(Error::Config(format!("symbol {s} has zero count")));
        }
        let mut leaves: Vec<(u64, i64)> = counts.iter().map(|(&s, &c)| (c, s)).collect();
        leaves.sort();
        let lengths = match leaves.len() {
            0 => Vec::new(),
            1 => vec![(leaves[0].1, 1)],
            n => {
                // Nodes 0..n are leaves in weight order; internal nodes follow.
                let mut parent = vec![usize::MAX; 2 * n - 1];
                let mut weight: Vec<u64> = leaves.iter().map(|l| l.0).collect();
                let (mut li, mut ii) = (0, n);
                let mut next = n;
                let pick = |weight: &Vec<u64>, li: &mut usize, ii: &mut usize, next: usize| {
                    if *li < n && (*ii >= next || weight[*li] <= weight[*ii]) {
                        *li += 1;
                        *li - 1
                    } else {
                        *ii += 1;
                        *ii - 1
                    }
                };
                while next < 2 * n - 1 {
                    let a = pick(&weight, &mut li, &mut ii, next);
                    let b = pick(&weight, &mut li, &mut ii, next);
                    weight.push(weight[a] + weight[b]);
                    parent[a] = next;
                    parent[b] = next;
                    next += 1;
                }
                let mut depth = vec![0u32; 2 * n - 1];
                for i in (0..2 * n - 2).rev() {
                    depth[i] = depth[parent[i]] + 1;
                }
                let mut out = Vec::with_capacity(n);
                for (i, &(_, s)) in leaves.iter().enumerate() {
                    if depth[i] > u32::from(MAX_LEN) {
                        return Err(Error::Config(format!("code length {} exceeds {MAX_LEN}", depth[i])));
                    }
                    out.push((s, depth[i] as u8));
                }
                out.sort();
                out
            }
        };
        Self::from_lengths(lengths)
    }

    /// Canonical code for the given lengths. Symbols must be unique.
    pub fn from_lengths(mut lengths: Vec<(i64, u8)>) -> Result<Self> {
        lengths.sort();
        if lengths.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Format("duplicate symbol in code table".into()));
        }
        if let Some(&(s, l)) = lengths.iter().find(|(_, l)| *l == 0 || *l > MAX_LEN) {
            return Err(Error::Format(format!("symbol {s} has invalid code length {l}")));
        }
        let kraft: u128 = lengths.iter().map(|&(_, l)| 1u128 << (MAX_LEN - l)).sum();
        if kraft > 1u128 << MAX_LEN {
            return Err(Error::Format("code lengths violate the Kraft inequality".into()));
        }
        let mut order: Vec<(u8, i64)> = lengths.iter().map(|&(s, l)| (l, s)).collect();
        order.sort();
        let max_len = order.last().map_or(0, |o| o.0) as usize;
        let mut starts = vec![(0u64, 0usize, 0usize); max_len + 1];
        let mut codes = HashMap::with_capacity(order.len());
        let mut code = 0u64;
        let mut prev_len = 0u8;
        for (i, &(l, s)) in order.iter().enumerate() {
            if l != prev_len {
                code <<= l - prev_len;
                starts[l as usize] = (code, i, 0);
                prev_len = l;
            }
            starts[l as usize].2 += 1;
            codes.insert(s, (code, l));
            code += 1;
        }
        Ok(Self { lengths, codes, canonical: order.into_iter().map(|o| o.1).collect(), starts })
    }

    pub fn lengths(&self) -> &[(i64, u8)] {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn code(&self, symbol: i64) -> Option<(u64, u8)> {
        self.codes.get(&symbol).copied()
    }

    pub fn encode(&self, symbols: &[i64]) -> Result<BitStream> {
        let mut bits = BitStream::new();
        for &s in symbols {
            let (code, len) = self.code(s).ok_or_else(|| Error::Format(format!("symbol {s} missing from code table")))?;
            bits.push_bits(code, u32::from(len));
        }
        Ok(bits)
    }

    pub fn decode_symbol(&self, r: &mut BitReader<'_>) -> Result<i64> {
        let mut code = 0u64;
        for l in 1..self.starts.len() {
            code = (code << 1) | u64::from(r.read_bit()?);
            let (first, index, count) = self.starts[l];
            if count > 0 && code >= first && code - first < count as u64 {
                return Ok(self.canonical[index + (code - first) as usize]);
            }
        }
        Err(Error::Format("bit pattern matches no code".into()))
    }

    pub fn decode(&self, r: &mut BitReader<'_>, n: usize) -> Result<Vec<i64>> {
        (0..n).map(|_| self.decode_symbol(r)).collect()
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.varint(self.lengths.len() as u64);
        let mut prev = 0i64;
        for &(s, l) in &self.lengths {
            w.zigzag(s.wrapping_sub(prev));
            w.u8(l);
            prev = s;
        }
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.varint()? as usize;
        if n > r.remaining() {
            return Err(Error::Truncated(format!("code table claims {n} entries")));
        }
        let mut lengths = Vec::with_capacity(n);
        let mut prev = 0i64;
        for i in 0..n {
            let delta = r.zigzag()?;
            if i > 0 && delta <= 0 {
                return Err(Error::Format("code table symbols not ascending".into()));
            }
            prev = prev.wrapping_add(delta);
            lengths.push((prev, r.u8()?));
        }
        Self::from_lengths(lengths)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.buf
    }

    /// Sum of `count * length`.
    pub fn encoded_bits(&self, counts: &BTreeMap<i64, u64>) -> Option<u64> {
        counts.iter().map(|(s, &c)| self.code(*s).map(|(_, l)| c * u64::from(l))).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedStream {
    pub bytes: Vec<u8>,
    /// Bytes spent on the code table.
    pub table_bytes: usize,
}

pub fn encode_stream(symbols: &[i64]) -> Result<EncodedStream> {
    let n = u32::try_from(symbols.len()).map_err(|_| Error::Format(format!("{} symbols exceed a u32 count", symbols.len())))?;
    let table = HuffmanTable::from_symbols(symbols)?;
    let mut w = Writer::new();
    w.u32(n);
    let before = w.buf.len();
    table.write(&mut w);
    let table_bytes = w.buf.len() - before;
    w.bytes(table.encode(symbols)?.as_bytes());
    Ok(EncodedStream { bytes: w.buf, table_bytes })
}

/// Bytes taken by the code table of an encoded stream.
pub fn stream_table_bytes(bytes: &[u8]) -> Result<usize> {
    let mut r = Reader::new(bytes, "huffman stream");
    r.u32()?;
    HuffmanTable::read(&mut r)?;
    Ok(r.position() - 4)
}

pub fn decode_stream(bytes: &[u8]) -> Result<Vec<i64>> {
    let mut r = Reader::new(bytes, "huffman stream");
    let n = r.u32()? as usize;
    let table = HuffmanTable::read(&mut r)?;
    let rest = r.take(r.remaining())?;
    if n > 0 && table.is_empty() {
        return Err(Error::Format(format!("{n} symbols with an empty code table")));
    }
    let mut bits = BitReader::new(rest);
    let out = table.decode(&mut bits, n)?;
    let used = bits.position();
    if used.div_ceil(8) != rest.len() {
        return Err(Error::Format(format!("{} payload bytes after {used} coded bits", rest.len())));
    }
    BitStream::from_bytes(rest.to_vec(), used)?;
    Ok(out)
}
