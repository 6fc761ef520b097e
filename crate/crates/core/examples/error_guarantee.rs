//! Bounds the per-block l2 error of a crude reconstruction without any trained
//! model: fit a residual basis, correct every 4x4x4 block, serialize the records.

use gcdtc::data_io::{generate_synthetic, SynthConfig};
use gcdtc::guarantee::{apply_corrections, block_errors, deserialize_corrections, fit_basis, guarantee_field, serialize_corrections, GuaranteeConfig};

fn main() -> gcdtc::Result<()> {
    let field = generate_synthetic(&SynthConfig { seed: 4, shape: [16, 32, 32], ..SynthConfig::default() })?;
    // Stand-in for a codec output: every 2x2 spatial patch replaced by its top-left sample.
    let [_, ny, nx] = field.shape;
    let crude = field.with_values((0..field.len()).map(|i| field.values[i - (i % nx) % 2 - ((i / nx) % ny) % 2 * nx]).collect())?;

    let (lo, hi) = field.value_range();
    for rel in [1e-1, 3e-2, 1e-2] {
        let cfg = GuaranteeConfig::new(rel * (hi - lo) * 8.0)?;
        let basis = fit_basis(&[(&field, &crude)], &cfg)?;
        let (fixed, records) = guarantee_field(&field, &crude, &basis, &cfg, 0)?;
        let payload = serialize_corrections(&records)?;
        let decoded = apply_corrections(&crude, &deserialize_corrections(&payload.bytes, cfg.block_len())?, &basis, &cfg)?;
        assert_eq!(decoded.values, fixed.values);

        let before = block_errors(&field, &crude, cfg.block_shape)?;
        let after = block_errors(&field, &decoded, cfg.block_shape)?;
        let over = before.iter().filter(|&&e| e > cfg.tau).count();
        let worst = after.iter().cloned().fold(0.0, f64::max);
        println!(
            "tau {:.3}: {over} of {} blocks over the bound before, worst after {worst:.3}, {} correction bytes",
            cfg.tau,
            before.len(),
            payload.bytes.len()
        );
        assert!(worst <= cfg.tau);
    }
    Ok(())
}
