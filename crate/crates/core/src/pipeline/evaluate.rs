use std::fmt::Write as _;
use std::time::Instant;

use super::archive::Archive;
use super::compress::{decompress_with, finish, prepare};
use super::metrics::{compression_ratio, nrmse_many, ByteBreakdown};
use super::models::TrainedModels;
use crate::data_io::Dtype;
use crate::error::{Error, Result};
use crate::guarantee::block_errors;
use crate::tensor::TensorField;

/// Quality and size of one archive against its originals.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub tau: f64,
    pub nrmse: f64,
    pub max_block_error: f64,
    /// Guarantee blocks with error above `tau`.
    pub violations: usize,
    pub blocks: usize,
    pub original_bytes: usize,
    pub breakdown: ByteBreakdown,
    /// Original bytes over archive plus model bytes.
    pub cr: f64,
    pub cr_without_models: f64,
    /// Wall time of decompression, when it was run.
    pub decode_seconds: Option<f64>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let b = &self.breakdown;
        let mut s = String::new();
        let _ = writeln!(s, "tau                 {:e}", self.tau);
        let _ = writeln!(s, "nrmse               {:e}", self.nrmse);
        let _ = writeln!(s, "max block error     {:e}", self.max_block_error);
        let _ = writeln!(s, "violations          {} of {} blocks", self.violations, self.blocks);
        let _ = writeln!(s, "original bytes      {}", self.original_bytes);
        let _ = writeln!(s, "archive bytes       {}", b.archive());
        let _ = writeln!(
            s,
            "  latent {}  corrections {}  basis {}  tables {}  header {}",
            b.latent, b.corrections, b.basis, b.tables, b.header
        );
        let _ = writeln!(s, "model bytes         {}", b.models);
        let _ = writeln!(s, "cr                  {:.3}", self.cr);
        let _ = writeln!(s, "cr without models   {:.3}", self.cr_without_models);
        if let Some(t) = self.decode_seconds {
            let _ = writeln!(s, "decode seconds      {t:.3}");
        }
        s
    }
}

fn original_bytes(fields: &[TensorField], dtype: Dtype) -> usize {
    fields.iter().map(|f| f.len() * dtype.width()).sum()
}

/// Scores `reconstruction` against `originals` using the sizes recorded in `archive`.
pub fn evaluate_reconstruction(originals: &[TensorField], reconstruction: &[TensorField], archive: &Archive) -> Result<EvalReport> {
    if originals.len() != reconstruction.len() {
        return Err(Error::Shape(format!("{} originals vs {} reconstructions", originals.len(), reconstruction.len())));
    }
    let mut errors = Vec::new();
    for (o, r) in originals.iter().zip(reconstruction) {
        errors.extend(block_errors(o, r, archive.guarantee_block)?);
    }
    let breakdown = archive.breakdown()?;
    let original = original_bytes(originals, archive.dtype);
    Ok(EvalReport {
        tau: archive.tau,
        nrmse: nrmse_many(originals, reconstruction)?,
        max_block_error: errors.iter().copied().fold(0.0, f64::max),
        violations: errors.iter().filter(|&&e| e > archive.tau).count(),
        blocks: errors.len(),
        original_bytes: original,
        breakdown,
        cr: compression_ratio(original, breakdown.total()),
        cr_without_models: compression_ratio(original, breakdown.archive()),
        decode_seconds: None,
    })
}

/// Decompresses `bytes` (timed) and scores the result.
pub fn evaluate(originals: &[TensorField], bytes: &[u8], models: &TrainedModels, threads: usize) -> Result<(EvalReport, Vec<TensorField>)> {
    let archive = Archive::from_bytes(bytes)?;
    let start = Instant::now();
    let recon = decompress_with(bytes, models, threads)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut report = evaluate_reconstruction(originals, &recon, &archive)?;
    report.decode_seconds = Some(seconds);
    Ok((report, recon))
}

/// One point of a rate-distortion curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RDPoint {
    pub tau: f64,
    pub nrmse: f64,
    pub cr: f64,
    pub breakdown: ByteBreakdown,
}

pub const RD_CSV_HEADER: &str = "tau,nrmse,cr,bytes_latent,bytes_corr,bytes_basis,bytes_model,bytes_tables";

/// Compresses `fields` once per bound. The codec and correction stages run once.
pub fn sweep(fields: &[TensorField], models: &TrainedModels, taus: &[f64], output: Dtype, threads: usize) -> Result<Vec<RDPoint>> {
    if taus.is_empty() {
        return Err(Error::Config("sweep needs at least one error bound".into()));
    }
    let prepared = prepare(fields, models, threads)?;
    let original = original_bytes(fields, output);
    taus.iter()
        .map(|&tau| {
            let c = finish(fields, &prepared, models, tau, output)?;
            Ok(RDPoint {
                tau,
                nrmse: nrmse_many(fields, &c.reconstruction)?,
                cr: compression_ratio(original, c.breakdown.total()),
                breakdown: c.breakdown,
            })
        })
        .collect()
}

/// Header line then one row per point. Header bytes count toward `cr` but get no column.
pub fn rd_csv(points: &[RDPoint]) -> String {
    let mut s = String::from(RD_CSV_HEADER);
    s.push('\n');
    for p in points {
        let b = &p.breakdown;
        let _ = writeln!(
            s,
            "{:e},{:e},{},{},{},{},{},{}",
            p.tau, p.nrmse, p.cr, b.latent, b.corrections, b.basis, b.models, b.tables
        );
    }
    s
}
