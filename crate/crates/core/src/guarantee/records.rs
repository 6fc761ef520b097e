//! Correction records as separate Huffman streams.
//!
//! ```text
//! modes     one symbol per block: 0 none, 1 pca, 2 raw
//! counts    per pca block: number of selected directions      (if any pca)
//! indices   per pca block: first index, then gaps to the next (if any pca)
//! coeffs    per selected direction: signed log code           (if any pca)
//! raw       per raw block: one uniform code per sample        (if any raw)
//! ```
//!
//! Each stream is a length-prefixed (`u32`) Huffman stream. Optional streams
//! are present exactly when the mode stream calls for them.

use super::{Correction, CorrectionRecord};
use crate::bytes::{Reader, Writer};
use crate::entropy::{decode_stream, encode_stream, stream_table_bytes, LogCode};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectionPayload {
    pub bytes: Vec<u8>,
    /// Bytes spent on Huffman code tables.
    pub table_bytes: usize,
}

/// Records must be in block order; block numbers are implied by position.
pub fn serialize_corrections(records: &[CorrectionRecord]) -> Result<CorrectionPayload> {
    let (mut modes, mut counts, mut gaps, mut coeffs, mut raw) = (vec![], vec![], vec![], vec![], vec![]);
    for (i, rec) in records.iter().enumerate() {
        if i > 0 && rec.block != records[i - 1].block + 1 {
            return Err(Error::Format(format!("record for block {} follows block {}", rec.block, records[i - 1].block)));
        }
        modes.push(i64::from(rec.correction.mode()));
        match &rec.correction {
            Correction::None => {}
            Correction::Pca { indices, codes } => {
                if indices.len() != codes.len() {
                    return Err(Error::Format(format!("{} indices with {} codes", indices.len(), codes.len())));
                }
                counts.push(indices.len() as i64);
                let mut prev = 0;
                for (j, &k) in indices.iter().enumerate() {
                    if j > 0 && k <= prev {
                        return Err(Error::Format(format!("basis indices {indices:?} not strictly ascending")));
                    }
                    gaps.push((k - if j == 0 { 0 } else { prev }) as i64);
                    prev = k;
                }
                coeffs.extend(codes.iter().map(|c| c.symbol()));
            }
            Correction::Raw(codes) => raw.extend_from_slice(codes),
        }
    }
    let mut w = Writer::new();
    let mut table_bytes = 0;
    let mut put = |w: &mut Writer, symbols: &[i64]| -> Result<()> {
        let s = encode_stream(symbols)?;
        table_bytes += s.table_bytes;
        w.section(&s.bytes)
    };
    put(&mut w, &modes)?;
    if !counts.is_empty() {
        put(&mut w, &counts)?;
        put(&mut w, &gaps)?;
        put(&mut w, &coeffs)?;
    }
    if !raw.is_empty() {
        put(&mut w, &raw)?;
    }
    Ok(CorrectionPayload { bytes: w.buf, table_bytes })
}

/// Inverse of [`serialize_corrections`]; `block_len` is the sample count of a
/// guarantee block. Records are numbered from zero.
pub fn deserialize_corrections(bytes: &[u8], block_len: usize) -> Result<Vec<CorrectionRecord>> {
    let mut r = Reader::new(bytes, "correction payload");
    let modes = decode_stream(r.section()?)?;
    let pca = modes.iter().filter(|&&m| m == 1).count();
    let raw_blocks = modes.iter().filter(|&&m| m == 2).count();
    let (counts, gaps, coeffs) = if pca > 0 {
        (decode_stream(r.section()?)?, decode_stream(r.section()?)?, decode_stream(r.section()?)?)
    } else {
        (vec![], vec![], vec![])
    };
    let raw = if raw_blocks > 0 { decode_stream(r.section()?)? } else { vec![] };
    r.finish()?;

    if counts.len() != pca {
        return Err(Error::Format(format!("{} selection counts for {pca} pca blocks", counts.len())));
    }
    let selected: i64 = counts.iter().sum();
    if counts.iter().any(|&c| c < 0 || c as usize > block_len) || gaps.len() as i64 != selected || coeffs.len() as i64 != selected {
        return Err(Error::Format("selection counts disagree with index or coefficient streams".into()));
    }
    if raw.len() != raw_blocks * block_len {
        return Err(Error::Format(format!("{} raw codes for {raw_blocks} blocks of {block_len}", raw.len())));
    }
    let (mut ci, mut si, mut ri) = (0, 0, 0);
    let mut out = Vec::with_capacity(modes.len());
    for (block, &m) in modes.iter().enumerate() {
        let correction = match m {
            0 => Correction::None,
            1 => {
                let k = counts[ci] as usize;
                ci += 1;
                let mut indices = Vec::with_capacity(k);
                let mut at = 0i64;
                for j in 0..k {
                    let g = gaps[si + j];
                    if (j > 0 && g <= 0) || g < 0 {
                        return Err(Error::Format(format!("bad index gap {g}")));
                    }
                    at += g;
                    if at as usize >= block_len {
                        return Err(Error::Format(format!("basis index {at} out of range {block_len}")));
                    }
                    indices.push(at as usize);
                }
                let codes = coeffs[si..si + k].iter().map(|&s| LogCode::from_symbol(s)).collect();
                si += k;
                Correction::Pca { indices, codes }
            }
            2 => {
                ri += block_len;
                Correction::Raw(raw[ri - block_len..ri].to_vec())
            }
            m => return Err(Error::Format(format!("unknown correction mode {m}"))),
        };
        out.push(CorrectionRecord { block, correction });
    }
    Ok(out)
}

/// Code-table bytes across every stream of a correction payload.
pub fn payload_table_bytes(bytes: &[u8]) -> Result<usize> {
    let mut r = Reader::new(bytes, "correction payload");
    let mut total = 0;
    while r.remaining() > 0 {
        total += stream_table_bytes(r.section()?)?;
    }
    Ok(total)
}
