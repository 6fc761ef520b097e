//! Prints the signal level of the linear variance schedules and checks one
//! forward/reverse step pair.

use gcdtc::diffusion::{forward_sample, reverse_step, NoiseSchedule};
use gcdtc::pipeline::PipelineConfig;

fn main() -> gcdtc::Result<()> {
    for (name, cfg) in [("paper", PipelineConfig::paper()), ("desk", PipelineConfig::desk())] {
        let s = cfg.schedule()?;
        let t = s.steps();
        println!(
            "{name}: {t} steps, beta {:e}..{:e}, alpha_bar at t/4 {:.4}, t/2 {:.4}, t {:.4}",
            s.beta(1),
            s.beta(t),
            s.alpha_bar(t / 4),
            s.alpha_bar(t / 2),
            s.alpha_bar(t)
        );
    }
    // One noise-free reverse step at t = 1 with the exact noise recovers x0.
    let s = NoiseSchedule::linear(1000, 1e-5, 5e-3)?;
    let x0 = [0.3, -0.8, 0.5];
    let eps = [1.0, -0.5, 0.25];
    let mut x = forward_sample(&x0, 1, &eps, &s)?;
    reverse_step(&mut x, &eps, 1, &s);
    println!("x0 {x0:?}, recovered {x:?}");
    Ok(())
}
