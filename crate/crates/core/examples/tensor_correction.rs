//! Trains the trace-correction network to undo a smooth bias in a
//! reconstruction and reports the MSE before and after.

use gcdtc::correction::{extract_traces, tc_apply, tc_train_with, TcOptions};
use gcdtc::data_io::{generate_synthetic, SynthConfig};
use gcdtc::tensor::{normalize, NormStats};

fn main() -> gcdtc::Result<()> {
    let f = generate_synthetic(&SynthConfig { seed: 2, shape: [32, 16, 16], ..SynthConfig::default() })?;
    let x = normalize(&f, &NormStats::of(&f)?)?;
    let biased = x.with_values(x.values.iter().map(|v| 0.9 * v + 0.05).collect())?;
    let traces = extract_traces(&x, &biased, 16)?;
    let (net, losses) = tc_train_with(&traces, &TcOptions { epochs: 100, ..TcOptions::default() })?;
    let fixed = tc_apply(&net, &biased)?;
    let mse = |a: &[f64]| a.iter().zip(&x.values).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64;
    println!("{} traces of length {}; loss {:.3e} -> {:.3e}", traces.len(), net.n_t(), losses[0], losses.last().unwrap());
    println!("mse {:.3e} before, {:.3e} after", mse(&biased.values), mse(&fixed.values));
    Ok(())
}
