//! Per-block l2 error guarantee.
//!
//! Residuals between the original and the reconstruction are tiled into small
//! blocks and summarized by a PCA basis. Any block whose error exceeds `tau`
//! gets the fewest basis coefficients (log-quantized) that bring it back within
//! `tau`. When even the full basis cannot, the block's residual is stored with
//! the uniform quantizer instead. The encoder checks each block against the
//! exact values the decoder will produce, so the bound holds on the output.

mod pca;
mod records;

pub use pca::{fit_basis_from_residuals, project, symmetric_eigen, ResidualBasis};
pub use records::{deserialize_corrections, payload_table_bytes, serialize_corrections, CorrectionPayload};

use crate::data_io::Dtype;
use crate::entropy::{dequantize_log, dequantize_uniform, quantize_log, quantize_uniform, LogCode, QuantConfig};
use crate::error::{Error, Result};
use crate::tensor::{BlockGrid, TensorField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuaranteeConfig {
    pub block_shape: [usize; 3],
    /// l2 bound per block, in the field's own units.
    pub tau: f64,
    pub quant: QuantConfig,
    /// Dtype the decoded field is stored in; checks use the stored values.
    pub output: Dtype,
}

impl GuaranteeConfig {
    pub fn new(tau: f64) -> Result<Self> {
        let cfg = Self { block_shape: [4, 4, 4], tau, quant: QuantConfig::default(), output: Dtype::F64 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn block_len(&self) -> usize {
        self.block_shape.iter().product()
    }

    /// Worst l2 error of the raw escape, `sqrt(n) a / (2b)`.
    pub fn raw_error_bound(&self) -> f64 {
        (self.block_len() as f64).sqrt() * self.quant.half_step()
    }

    pub fn validate(&self) -> Result<()> {
        self.quant.validate()?;
        if self.block_shape.contains(&0) {
            return Err(Error::Config(format!("guarantee block shape {:?} has a zero axis", self.block_shape)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("error bound {} must be positive and finite", self.tau)));
        }
        let threshold = self.raw_error_bound();
        if self.tau <= threshold {
            return Err(Error::InfeasibleBound { tau: self.tau, threshold });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Correction {
    None,
    /// Ascending basis indices with their log codes.
    Pca { indices: Vec<usize>, codes: Vec<LogCode> },
    /// Uniform codes of the residual, one per sample.
    Raw(Vec<i64>),
}

impl Correction {
    pub fn mode(&self) -> u8 {
        match self {
            Correction::None => 0,
            Correction::Pca { .. } => 1,
            Correction::Raw(_) => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectionRecord {
    pub block: usize,
    pub correction: Correction,
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Decoder-side block reconstruction.
pub fn reconstruct_block(b_hat: &[f64], correction: &Correction, basis: &ResidualBasis, cfg: &GuaranteeConfig) -> Result<Vec<f64>> {
    let n = b_hat.len();
    let mut out = b_hat.to_vec();
    match correction {
        Correction::None => {}
        Correction::Pca { indices, codes } => {
            if basis.len() != n {
                return Err(Error::Shape(format!("block of {n} samples for a basis of {}", basis.len())));
            }
            if indices.len() != codes.len() || indices.windows(2).any(|w| w[0] >= w[1]) || indices.last().is_some_and(|&i| i >= n) {
                return Err(Error::Format(format!("invalid basis selection {indices:?}")));
            }
            for (o, m) in out.iter_mut().zip(basis.mean()) {
                *o += m;
            }
            for (&k, &code) in indices.iter().zip(codes) {
                let c = dequantize_log(code, &cfg.quant);
                for (o, u) in out.iter_mut().zip(basis.column(k)) {
                    *o += u * c;
                }
            }
        }
        Correction::Raw(codes) => {
            if codes.len() != n {
                return Err(Error::Format(format!("{} raw codes for a block of {n}", codes.len())));
            }
            for (o, &q) in out.iter_mut().zip(codes) {
                *o += dequantize_uniform(q, &cfg.quant);
            }
        }
    }
    out.iter_mut().for_each(|v| *v = cfg.output.round(*v));
    Ok(out)
}

/// Basis directions in the order the encoder tries them: descending
/// dequantized magnitude, lower index first on ties. Directions whose
/// quantized coefficient would not shrink the residual along that axis are
/// left out.
fn candidates(coeffs: &[f64], cfg: &GuaranteeConfig) -> Result<Vec<(usize, LogCode, f64)>> {
    let mut out = Vec::new();
    for (k, &c) in coeffs.iter().enumerate() {
        let code = quantize_log(c, &cfg.quant)?;
        let deq = dequantize_log(code, &cfg.quant);
        if deq != 0.0 && (c - deq).abs() < c.abs() {
            out.push((k, code, deq));
        }
    }
    out.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then(a.0.cmp(&b.0)));
    Ok(out)
}

fn pca_with(prefix: &[(usize, LogCode, f64)]) -> Correction {
    let mut chosen: Vec<(usize, LogCode)> = prefix.iter().map(|&(k, c, _)| (k, c)).collect();
    chosen.sort_by_key(|c| c.0);
    Correction::Pca { indices: chosen.iter().map(|c| c.0).collect(), codes: chosen.iter().map(|c| c.1).collect() }
}

/// Encoder-side correction of one block. Returns the decoded block and its record.
pub fn correct_block(b: &[f64], b_hat: &[f64], basis: &ResidualBasis, cfg: &GuaranteeConfig) -> Result<(Vec<f64>, Correction)> {
    if b.len() != b_hat.len() || b.len() != basis.len() {
        return Err(Error::Shape(format!("blocks of {} and {} samples for a basis of {}", b.len(), b_hat.len(), basis.len())));
    }
    let plain = reconstruct_block(b_hat, &Correction::None, basis, cfg)?;
    if l2_distance(b, &plain) <= cfg.tau {
        return Ok((plain, Correction::None));
    }
    let residual: Vec<f64> = b.iter().zip(b_hat).map(|(x, y)| x - y).collect();
    let coeffs = project(&residual, basis)?;
    let order = candidates(&coeffs, cfg)?;
    for k in 0..=order.len() {
        let corr = pca_with(&order[..k]);
        let out = reconstruct_block(b_hat, &corr, basis, cfg)?;
        if l2_distance(b, &out) <= cfg.tau {
            return Ok((out, corr));
        }
    }
    let codes = residual.iter().map(|&r| quantize_uniform(r, &cfg.quant)).collect::<Result<Vec<_>>>()?;
    let corr = Correction::Raw(codes);
    let out = reconstruct_block(b_hat, &corr, basis, cfg)?;
    let err = l2_distance(b, &out);
    if err > cfg.tau {
        // Only reachable when output rounding eats the margin above the raw bound.
        return Err(Error::InfeasibleBound { tau: cfg.tau, threshold: err });
    }
    Ok((out, corr))
}

/// Achieved l2 error after each greedy step (index 0 is the mean alone).
pub fn selection_errors(b: &[f64], b_hat: &[f64], basis: &ResidualBasis, cfg: &GuaranteeConfig) -> Result<Vec<f64>> {
    let residual: Vec<f64> = b.iter().zip(b_hat).map(|(x, y)| x - y).collect();
    let order = candidates(&project(&residual, basis)?, cfg)?;
    (0..=order.len())
        .map(|k| Ok(l2_distance(b, &reconstruct_block(b_hat, &pca_with(&order[..k]), basis, cfg)?)))
        .collect()
}

fn check_pair(original: &TensorField, recon: &TensorField) -> Result<()> {
    if original.shape != recon.shape {
        return Err(Error::Shape(format!("original {:?} and reconstruction {:?} differ", original.shape, recon.shape)));
    }
    Ok(())
}

/// Residual blocks `b - b_hat` over all fields, in field then block order.
pub fn residual_blocks(pairs: &[(&TensorField, &TensorField)], block_shape: [usize; 3]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for &(original, recon) in pairs {
        check_pair(original, recon)?;
        let grid = BlockGrid::new(original.member_id, original.shape, block_shape)?;
        for o in grid.origins() {
            let (b, h) = (grid.extract(original, o), grid.extract(recon, o));
            out.push(b.values.iter().zip(&h.values).map(|(x, y)| x - y).collect());
        }
    }
    Ok(out)
}

/// One basis for the residuals of every `(original, reconstruction)` pair.
pub fn fit_basis(pairs: &[(&TensorField, &TensorField)], cfg: &GuaranteeConfig) -> Result<ResidualBasis> {
    fit_basis_from_residuals(&residual_blocks(pairs, cfg.block_shape)?)
}

/// Corrects every block of `recon` against `original`. Records are numbered
/// from `first_block`.
pub fn guarantee_field(
    original: &TensorField,
    recon: &TensorField,
    basis: &ResidualBasis,
    cfg: &GuaranteeConfig,
    first_block: usize,
) -> Result<(TensorField, Vec<CorrectionRecord>)> {
    check_pair(original, recon)?;
    let grid = BlockGrid::new(recon.member_id, recon.shape, cfg.block_shape)?;
    let mut values = recon.values.clone();
    let mut records = Vec::with_capacity(grid.block_count());
    for (i, o) in grid.origins().enumerate() {
        let (b, h) = (grid.extract(original, o), grid.extract(recon, o));
        let (fixed, correction) = correct_block(&b.values, &h.values, basis, cfg)?;
        write_interior(&grid, o, &fixed, &mut values);
        records.push(CorrectionRecord { block: first_block + i, correction });
    }
    Ok((recon.with_values(values)?, records))
}

/// Decoder side of [`guarantee_field`]. `records` must hold one entry per
/// block of the field, consecutively numbered.
pub fn apply_corrections(recon: &TensorField, records: &[CorrectionRecord], basis: &ResidualBasis, cfg: &GuaranteeConfig) -> Result<TensorField> {
    let grid = BlockGrid::new(recon.member_id, recon.shape, cfg.block_shape)?;
    if records.len() != grid.block_count() {
        return Err(Error::Format(format!("{} correction records for {} blocks", records.len(), grid.block_count())));
    }
    let first = records.first().map_or(0, |r| r.block);
    let mut values = recon.values.clone();
    for (i, (o, rec)) in grid.origins().zip(records).enumerate() {
        if rec.block != first + i {
            return Err(Error::Format(format!("correction record {} out of order at position {i}", rec.block)));
        }
        let h = grid.extract(recon, o);
        let fixed = reconstruct_block(&h.values, &rec.correction, basis, cfg)?;
        write_interior(&grid, o, &fixed, &mut values);
    }
    recon.with_values(values)
}

fn write_interior(grid: &BlockGrid, o: crate::tensor::BlockOrigin, block: &[f64], values: &mut [f64]) {
    let [_, bh, bw] = grid.block_shape;
    let [_, ny, nx] = grid.field_shape;
    let [it, iy, ix] = grid.interior_shape(o);
    for dt in 0..it {
        for dy in 0..iy {
            let src = (dt * bh + dy) * bw;
            let dst = ((o.t0 + dt) * ny + o.y0 + dy) * nx + o.x0;
            values[dst..dst + ix].copy_from_slice(&block[src..src + ix]);
        }
    }
}

/// l2 error of every block over the samples inside the field.
pub fn block_errors(original: &TensorField, candidate: &TensorField, block_shape: [usize; 3]) -> Result<Vec<f64>> {
    check_pair(original, candidate)?;
    let grid = BlockGrid::new(original.member_id, original.shape, block_shape)?;
    let [_, ny, nx] = original.shape;
    Ok(grid
        .origins()
        .map(|o| {
            let [it, iy, ix] = grid.interior_shape(o);
            let mut sum = 0.0;
            for dt in 0..it {
                for dy in 0..iy {
                    let row = ((o.t0 + dt) * ny + o.y0 + dy) * nx + o.x0;
                    for i in row..row + ix {
                        let d = original.values[i] - candidate.values[i];
                        sum += d * d;
                    }
                }
            }
            sum.sqrt()
        })
        .collect())
}
