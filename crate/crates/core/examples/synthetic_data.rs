//! Generates drifting-bump fields, writes them to a .gsd file and reads them back.

use gcdtc::data_io::{generate_synthetic, lag1_autocorrelation, read_raw, write_raw, Dtype, SynthConfig};

fn main() -> gcdtc::Result<()> {
    let fields = (0..3)
        .map(|seed| {
            let mut f = generate_synthetic(&SynthConfig { seed, shape: [16, 32, 32], ..SynthConfig::default() })?;
            f.member_id = seed as u32;
            Ok(f)
        })
        .collect::<gcdtc::Result<Vec<_>>>()?;
    for f in &fields {
        let (lo, hi) = f.value_range();
        println!("member {}: shape {:?}, range [{lo:.3}, {hi:.3}], lag-1 autocorrelation {:.3}", f.member_id, f.shape, lag1_autocorrelation(f, 64, 0));
    }
    let path = std::env::temp_dir().join("gcdtc_synthetic.gsd");
    let n = write_raw(&fields, Dtype::F32, &path)?;
    let (header, back) = read_raw(&path)?;
    let worst = fields
        .iter()
        .zip(&back)
        .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    println!("{n} bytes as {:?}; f32 storage changed values by at most {worst:.2e}", header.dtype);
    std::fs::remove_file(path)?;
    Ok(())
}
