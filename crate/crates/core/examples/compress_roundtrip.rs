//! Train on two synthetic fields, compress a third under an l2 bound, decode
//! it back and report the error and size accounting.

use std::time::Instant;

use gcdtc::data_io::{generate_synthetic, SynthConfig};
use gcdtc::pipeline::{compress, evaluate, train, PipelineConfig};

fn main() -> gcdtc::Result<()> {
    let field = |seed| generate_synthetic(&SynthConfig { seed, shape: [8, 16, 32], ..SynthConfig::default() });
    let training = vec![field(0)?, field(1)?];
    let start = Instant::now();
    let models = train(&training, &PipelineConfig::desk())?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let data = vec![field(7)?];
    let (lo, hi) = data[0].value_range();
    let tau = 1e-2 * (hi - lo) * 8.0;
    let start = Instant::now();
    let packed = compress(&data, &models, tau)?;
    println!("compressed in {:.1}s, tc applied: {}", start.elapsed().as_secs_f64(), packed.archive.tc_applied);

    let (report, decoded) = evaluate(&data, &packed.bytes, &models, 1)?;
    print!("{}", report.to_text());
    assert_eq!(decoded, packed.reconstruction, "decoder disagrees with encoder");
    assert_eq!(report.violations, 0);
    Ok(())
}
