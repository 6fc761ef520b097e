use crate::error::{Error, Result};
use crate::tensor::TensorField;

/// Root mean squared error divided by the original's value range.
pub fn nrmse(original: &TensorField, reconstructed: &TensorField) -> Result<f64> {
    nrmse_many(std::slice::from_ref(original), std::slice::from_ref(reconstructed))
}

/// NRMSE pooled over several members; the range is taken over all of them.
pub fn nrmse_many(original: &[TensorField], reconstructed: &[TensorField]) -> Result<f64> {
    if original.len() != reconstructed.len() || original.is_empty() {
        return Err(Error::Shape(format!("{} originals vs {} reconstructions", original.len(), reconstructed.len())));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut count) = (0.0, 0usize);
    for (a, b) in original.iter().zip(reconstructed) {
        if a.shape != b.shape {
            return Err(Error::Shape(format!("original {:?} vs reconstruction {:?}", a.shape, b.shape)));
        }
        let (min, max) = a.value_range();
        lo = lo.min(min);
        hi = hi.max(max);
        sum += a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        count += a.len();
    }
    if !(hi > lo) {
        return Err(Error::DegenerateRange { min: lo, max: hi });
    }
    Ok((sum / count as f64).sqrt() / (hi - lo))
}

/// Compressed size split by what the bytes encode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ByteBreakdown {
    /// Entropy-coded latent symbols, without their code table.
    pub latent: usize,
    /// Entropy-coded correction symbols, without their code tables.
    pub corrections: usize,
    pub basis: usize,
    /// Huffman code tables of every stream.
    pub tables: usize,
    /// Checkpoints and model configuration.
    pub models: usize,
    /// Everything else in the archive: header, section lengths, fingerprints, checksum.
    pub header: usize,
}

impl ByteBreakdown {
    pub fn total(&self) -> usize {
        self.latent + self.corrections + self.basis + self.tables + self.models + self.header
    }

    /// Size of the archive file alone.
    pub fn archive(&self) -> usize {
        self.total() - self.models
    }
}

pub fn compression_ratio(original_bytes: usize, compressed_bytes: usize) -> f64 {
    original_bytes as f64 / compressed_bytes as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(v: Vec<f64>) -> TensorField {
        TensorField::new(0, [1, 1, v.len()], v).unwrap()
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let a = field(vec![1.0, 2.0, 5.0]);
        assert_eq!(nrmse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn midpoint_reconstruction() {
        assert_eq!(nrmse(&field(vec![0.0, 1.0]), &field(vec![0.5, 0.5])).unwrap(), 0.5);
    }

    #[test]
    fn constant_offset() {
        let a = field((0..100).map(|i| (i as f64 * 0.3).sin() * 7.0).collect());
        let (lo, hi) = a.value_range();
        let b = field(a.values.iter().map(|v| v + 0.001 * (hi - lo)).collect());
        assert!((nrmse(&a, &b).unwrap() - 0.001).abs() < 1e-12);
    }

    #[test]
    fn constant_original_rejected() {
        assert!(matches!(nrmse(&field(vec![2.0; 4]), &field(vec![1.0; 4])), Err(Error::DegenerateRange { .. })));
    }

    #[test]
    fn ratio_arithmetic() {
        assert_eq!(compression_ratio(1_000_000, 10_000), 100.0);
        let b = ByteBreakdown { latent: 10, corrections: 20, basis: 30, tables: 4, models: 100, header: 6 };
        assert_eq!(b.total(), 170);
        assert_eq!(b.archive(), 70);
        let smaller = ByteBreakdown { corrections: 0, ..b };
        assert!(compression_ratio(1000, smaller.total()) > compression_ratio(1000, b.total()));
    }
}
