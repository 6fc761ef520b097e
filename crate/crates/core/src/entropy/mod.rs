//! Scalar quantizers and canonical Huffman coding.

mod bitstream;
mod huffman;

pub use bitstream::{BitReader, BitStream};
pub use huffman::{decode_stream, encode_stream, stream_table_bytes, EncodedStream, HuffmanTable};

use crate::error::{Error, Result};

/// Quantization factor `b` (a power of ten) and bin size `a`; the step is `a / b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantConfig {
    pub b: u64,
    pub a: u64,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self { b: 1000, a: 16 }
    }
}

/// Largest |q| accepted by the uniform quantizer. Beyond this the bin midpoint
/// is no longer exactly representable.
const MAX_CODE: f64 = 4_503_599_627_370_496.0; // 2^52

impl QuantConfig {
    pub fn new(b: u64, a: u64) -> Result<Self> {
        let cfg = Self { b, a };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = self.b;
        while p >= 10 && p % 10 == 0 {
            p /= 10;
        }
        if self.b < 10 || p != 1 {
            return Err(Error::Config(format!("quantization factor b={} is not a power of ten", self.b)));
        }
        if self.a == 0 {
            return Err(Error::Config("bin size a must be at least 1".into()));
        }
        Ok(())
    }

    /// Bin width `a / b`.
    pub fn step(&self) -> f64 {
        self.a as f64 / self.b as f64
    }

    /// Worst-case uniform reconstruction error `a / (2b)`.
    pub fn half_step(&self) -> f64 {
        self.a as f64 / (2.0 * self.b as f64)
    }

    fn scale(&self) -> f64 {
        self.b as f64 / self.a as f64
    }
}

/// `floor((b/a) x)`.
pub fn quantize_uniform(x: f64, cfg: &QuantConfig) -> Result<i64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("quantizer input {x}")));
    }
    let q = (x * cfg.scale()).floor();
    if q.abs() > MAX_CODE {
        return Err(Error::Config(format!("value {x} overflows the quantizer range at step {}", cfg.step())));
    }
    let mut q = q as i64;
    // Rounding in the product can land one bin off near an edge.
    let half = cfg.half_step();
    while x - dequantize_uniform(q, cfg) > half {
        q += 1;
    }
    while dequantize_uniform(q, cfg) - x > half {
        q -= 1;
    }
    Ok(q)
}

/// Bin midpoint `(q + 1/2) a / b`.
pub fn dequantize_uniform(q: i64, cfg: &QuantConfig) -> f64 {
    (q as f64 + 0.5) * cfg.step()
}

/// Sign and magnitude code of the log quantizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogCode {
    /// -1, 0 or 1.
    pub sign: i8,
    pub magnitude: u64,
}

impl LogCode {
    pub const ZERO: LogCode = LogCode { sign: 0, magnitude: 0 };

    /// Single signed integer `sign * (magnitude + 1)`, zero for the zero code.
    pub fn symbol(self) -> i64 {
        i64::from(self.sign) * (self.magnitude as i64 + 1)
    }

    pub fn from_symbol(s: i64) -> Self {
        match s {
            0 => Self::ZERO,
            s => Self { sign: s.signum() as i8, magnitude: s.unsigned_abs() - 1 },
        }
    }
}

/// `m = floor((b/a) ln(1 + |c|))` with the sign kept separately.
pub fn quantize_log(c: f64, cfg: &QuantConfig) -> Result<LogCode> {
    if !c.is_finite() {
        return Err(Error::NonFinite(format!("log quantizer input {c}")));
    }
    if c == 0.0 {
        return Ok(LogCode::ZERO);
    }
    let m = (c.abs().ln_1p() * cfg.scale()).floor();
    Ok(LogCode { sign: if c > 0.0 { 1 } else { -1 }, magnitude: m as u64 })
}

/// `sgn * (exp((m + 1/2) a / b) - 1)`.
pub fn dequantize_log(code: LogCode, cfg: &QuantConfig) -> f64 {
    if code.sign == 0 {
        return 0.0;
    }
    f64::from(code.sign) * ((code.magnitude as f64 + 0.5) * cfg.step()).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn config_validation() {
        assert!(QuantConfig::new(1000, 16).is_ok());
        assert!(QuantConfig::new(10, 1).is_ok());
        assert!(QuantConfig::new(1, 1).is_err());
        assert!(QuantConfig::new(500, 16).is_err());
        assert!(QuantConfig::new(1000, 0).is_err());
        assert_eq!(QuantConfig::default(), QuantConfig { b: 1000, a: 16 });
    }

    #[test]
    fn uniform_examples() {
        let cfg = QuantConfig::default();
        assert_eq!(quantize_uniform(0.0, &cfg).unwrap(), 0);
        assert!((dequantize_uniform(0, &cfg) - 0.008).abs() < 1e-15);
        assert_eq!(quantize_uniform(0.1, &cfg).unwrap(), 6);
        assert!((dequantize_uniform(6, &cfg) - 0.104).abs() < 1e-15);
        assert_eq!(quantize_uniform(-0.1, &cfg).unwrap(), -7);
        assert!((dequantize_uniform(-7, &cfg) + 0.104).abs() < 1e-15);
    }

    #[test]
    fn uniform_rejects_overflow_and_nan() {
        let cfg = QuantConfig::default();
        assert!(quantize_uniform(1e300, &cfg).is_err());
        assert!(quantize_uniform(f64::NAN, &cfg).is_err());
    }

    #[test]
    fn log_examples() {
        let cfg = QuantConfig::default();
        assert_eq!(quantize_log(0.0, &cfg).unwrap(), LogCode::ZERO);
        assert_eq!(dequantize_log(LogCode::ZERO, &cfg), 0.0);
        let one = quantize_log(1.0, &cfg).unwrap();
        assert_eq!(one, LogCode { sign: 1, magnitude: 43 });
        assert!((dequantize_log(one, &cfg) - (0.696f64.exp() - 1.0)).abs() < 1e-12);
        assert!((dequantize_log(one, &cfg) - 1.0057).abs() < 1e-4);
        let neg = quantize_log(-1.0, &cfg).unwrap();
        assert_eq!(neg, LogCode { sign: -1, magnitude: 43 });
        assert_eq!(dequantize_log(neg, &cfg), -dequantize_log(one, &cfg));
    }

    #[test]
    fn log_symbols_round_trip() {
        for s in -50..50 {
            assert_eq!(LogCode::from_symbol(s).symbol(), s);
        }
    }

    proptest! {
        #[test]
        fn uniform_error_within_half_step(x in -1e6f64..1e6, b_exp in 1u32..6, a in 1u64..64) {
            let cfg = QuantConfig::new(10u64.pow(b_exp), a).unwrap();
            let q = quantize_uniform(x, &cfg).unwrap();
            prop_assert!((x - dequantize_uniform(q, &cfg)).abs() <= cfg.half_step());
        }

        #[test]
        fn log_error_within_bin_of_log_magnitude(c in -1e6f64..1e6) {
            // |ln(1+|c|) - ln(1+|c^|)| <= a/(2b)
            let cfg = QuantConfig::default();
            let d = dequantize_log(quantize_log(c, &cfg).unwrap(), &cfg);
            prop_assert!((c.abs().ln_1p() - d.abs().ln_1p()).abs() <= cfg.half_step() * (1.0 + 1e-12));
            prop_assert_eq!(c.signum() * d.signum() >= 0.0, true);
        }

        #[test]
        fn log_is_odd_and_monotone(x in 0f64..1e5, y in 0f64..1e5) {
            let cfg = QuantConfig::default();
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            let (ql, qh) = (quantize_log(lo, &cfg).unwrap(), quantize_log(hi, &cfg).unwrap());
            prop_assert!(dequantize_log(ql, &cfg) <= dequantize_log(qh, &cfg));
            let n = quantize_log(-x, &cfg).unwrap();
            prop_assert_eq!(dequantize_log(n, &cfg), -dequantize_log(quantize_log(x, &cfg).unwrap(), &cfg));
        }
    }
}
