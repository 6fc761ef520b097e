use crate::error::{Error, Result};

/// Transformer-style sinusoidal encoding of a diffusion step.
///
/// Entry `2k` is `sin(t / 10000^(2k/dim))` and entry `2k + 1` the matching cosine.
pub fn sinusoidal_time_embedding(t: f64, dim: usize) -> Result<Vec<f64>> {
    if dim % 2 != 0 || dim == 0 {
        return Err(Error::Config(format!("time embedding dimension {dim} must be even and positive")));
    }
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let phase = t / 10000f64.powf(2.0 * k as f64 / dim as f64);
        out.push(phase.sin());
        out.push(phase.cos());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_lie_on_unit_circle() {
        for t in [1.0, 17.0, 999.0] {
            let e = sinusoidal_time_embedding(t, 64).unwrap();
            let norm2: f64 = e.iter().map(|v| v * v).sum();
            assert!((norm2 - 32.0).abs() < 1e-12);
            for p in e.chunks(2) {
                assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_step_is_zero_phase() {
        let e = sinusoidal_time_embedding(0.0, 8).unwrap();
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn neighbouring_steps_differ_in_every_pair() {
        let a = sinusoidal_time_embedding(1.0, 64).unwrap();
        let b = sinusoidal_time_embedding(2.0, 64).unwrap();
        for (pa, pb) in a.chunks(2).zip(b.chunks(2)) {
            assert!(pa[0] != pb[0] && pa[1] != pb[1]);
        }
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(sinusoidal_time_embedding(1.0, 7).is_err());
    }
}
