//! Trains the desk-preset diffusion codec on four small synthetic fields and
//! checks that decoding from the quantized latent beats a zero latent.

use std::time::Instant;

use gcdtc::data_io::{generate_synthetic, SynthConfig};
use gcdtc::entropy::{dequantize_uniform, quantize_uniform};
use gcdtc::pipeline::{train, PipelineConfig};
use gcdtc::tensor::{normalize, partition, NormStats};

fn running_mean(losses: &[f64], end: usize) -> f64 {
    losses[end - 50..end].iter().sum::<f64>() / 50.0
}

fn main() -> gcdtc::Result<()> {
    let fields = (0..4)
        .map(|seed| generate_synthetic(&SynthConfig { seed, shape: [8, 16, 32], ..SynthConfig::default() }))
        .collect::<gcdtc::Result<Vec<_>>>()?;
    let cfg = PipelineConfig::desk();
    let start = Instant::now();
    let models = train(&fields, &cfg)?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());
    let l = &models.codec_losses;
    println!("loss: first 50 {:.4}, last 50 {:.4}", running_mean(l, 50), running_mean(l, l.len()));
    println!("tc loss: first {:.3e}, last {:.3e}", models.tc_losses[0], models.tc_losses.last().unwrap());

    let (mut wins, mut total) = (0, 0);
    for f in &fields {
        let norm = normalize(f, &NormStats::of(f)?)?;
        let (blocks, _) = partition(&norm, cfg.model.block_shape)?;
        for b in &blocks {
            let q = &cfg.latent_quant;
            let z = models
                .codec
                .encode_block(&b.values)?
                .iter()
                .map(|&v| quantize_uniform(v, q).map(|c| dequantize_uniform(c, q)))
                .collect::<gcdtc::Result<Vec<_>>>()?;
            let err = |x: &[f64]| x.iter().zip(&b.values).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
            let true_z = err(&models.codec.decode_block(&z)?);
            let zero_z = err(&models.codec.decode_block(&vec![0.0; z.len()])?);
            wins += usize::from(true_z < zero_z);
            total += 1;
            println!("block {:?}: true z {:.4e}, zero z {:.4e}", b.origin, true_z, zero_z);
        }
    }
    println!("true latent wins on {wins} of {total} blocks");
    Ok(())
}
