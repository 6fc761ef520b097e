#![allow(dead_code)]

pub mod gradcheck;

use gcdtc::data_io::{generate_synthetic, SynthConfig};
use gcdtc::tensor::TensorField;

/// Synthetic field with the generator defaults apart from seed and shape.
pub fn synth(seed: u64, shape: [usize; 3]) -> TensorField {
    let mut f = generate_synthetic(&SynthConfig { seed, shape, ..SynthConfig::default() }).unwrap();
    f.member_id = seed as u32;
    f
}

/// Four 8x16x32 fields, i.e. eight desk-preset codec blocks.
pub fn tiny_set() -> Vec<TensorField> {
    (0..4).map(|s| synth(s, [8, 16, 32])).collect()
}

pub fn range(fields: &[TensorField]) -> f64 {
    let (lo, hi) = fields
        .iter()
        .map(TensorField::value_range)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
    hi - lo
}
