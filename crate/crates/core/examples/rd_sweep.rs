//! Trains desk-preset models, then writes a rate-distortion CSV for a range of
//! error bounds on held-out fields.

use gcdtc::data_io::{generate_synthetic, Dtype, SynthConfig};
use gcdtc::pipeline::{rd_csv, sweep, train, PipelineConfig};
use gcdtc::tensor::TensorField;

fn fields(seeds: std::ops::Range<u64>) -> gcdtc::Result<Vec<TensorField>> {
    seeds
        .map(|seed| {
            let mut f = generate_synthetic(&SynthConfig { seed, shape: [8, 16, 32], ..SynthConfig::default() })?;
            f.member_id = seed as u32;
            Ok(f)
        })
        .collect()
}

fn main() -> gcdtc::Result<()> {
    let models = train(&fields(0..4)?, &PipelineConfig::desk())?;
    let test = fields(20..22)?;
    let (lo, hi) = test.iter().map(TensorField::value_range).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
    let taus: Vec<f64> = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1].iter().map(|r| r * (hi - lo) * 8.0).collect();
    print!("{}", rd_csv(&sweep(&test, &models, &taus, Dtype::F32, 1)?));
    Ok(())
}
