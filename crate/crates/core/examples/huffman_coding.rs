//! Entropy-codes a skewed integer stream and compares the bit count with its
//! empirical entropy.

use std::collections::BTreeMap;

use gcdtc::entropy::{decode_stream, encode_stream, HuffmanTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> gcdtc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let symbols: Vec<i64> = (0..50_000).map(|_| (rng.sample::<f64, _>(StandardNormal) * 3.0).round() as i64).collect();

    let mut counts = BTreeMap::new();
    for &s in &symbols {
        *counts.entry(s).or_insert(0u64) += 1;
    }
    let n = symbols.len() as f64;
    let entropy: f64 = counts.values().map(|&c| -(c as f64 / n) * (c as f64 / n).log2()).sum();
    let table = HuffmanTable::from_counts(&counts)?;
    for (sym, len) in table.lengths().iter().take(8) {
        println!("symbol {sym:>3}: {len} bits, seen {} times", counts[sym]);
    }

    let stream = encode_stream(&symbols)?;
    assert_eq!(decode_stream(&stream.bytes)?, symbols);
    let bits = table.encoded_bits(&counts).unwrap();
    println!(
        "{} symbols, {} distinct: entropy {entropy:.3} bits/symbol, huffman {:.3} bits/symbol, stream {} bytes ({} in the table)",
        symbols.len(),
        counts.len(),
        bits as f64 / n,
        stream.bytes.len(),
        stream.table_bytes
    );
    Ok(())
}
