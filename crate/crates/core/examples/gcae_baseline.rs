//! Runs the plain autoencoder baseline and the diffusion codec through the same
//! compress path at one bound and compares sizes.

use gcdtc::data_io::{generate_synthetic, SynthConfig};
use gcdtc::diffusion::CodecKind;
use gcdtc::pipeline::{compress, decompress, nrmse_many, train, PipelineConfig};

fn main() -> gcdtc::Result<()> {
    let data = (0..4)
        .map(|seed| {
            let mut f = generate_synthetic(&SynthConfig { seed, shape: [8, 16, 32], ..SynthConfig::default() })?;
            f.member_id = seed as u32;
            Ok(f)
        })
        .collect::<gcdtc::Result<Vec<_>>>()?;
    let (lo, hi) = data[0].value_range();
    let tau = 1e-2 * (hi - lo) * 8.0;
    for kind in [CodecKind::Gcae, CodecKind::Gcd] {
        let cfg = PipelineConfig { codec: kind, ..PipelineConfig::desk() };
        let models = train(&data, &cfg)?;
        let packed = compress(&data, &models, tau)?;
        let out = decompress(&packed.bytes, &models)?;
        let b = packed.breakdown;
        println!(
            "{}: nrmse {:.3e}, latent {} B, corrections {} B, archive {} B, models {} B, tc applied {}",
            kind.name(),
            nrmse_many(&data, &out)?,
            b.latent,
            b.corrections,
            b.archive(),
            b.models,
            packed.archive.tc_applied
        );
    }
    Ok(())
}
