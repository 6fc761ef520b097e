use super::archive::{Archive, MemberHeader};
use super::metrics::ByteBreakdown;
use super::models::TrainedModels;
use crate::correction::tc_apply;
use crate::data_io::Dtype;
use crate::diffusion::Codec;
use crate::entropy::{decode_stream, dequantize_uniform, encode_stream, quantize_uniform, QuantConfig};
use crate::error::{Error, Result};
use crate::guarantee::{
    apply_corrections, deserialize_corrections, fit_basis, guarantee_field, serialize_corrections, GuaranteeConfig, ResidualBasis,
};
use crate::tensor::{denormalize, normalize, partition, reassemble, BlockGrid, NormStats, TensorField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressOptions {
    /// Per-block l2 bound in the data's units.
    pub tau: f64,
    /// Dtype the decoded field is written in.
    pub output: Dtype,
    /// Worker threads for block encode and decode. Output does not depend on it.
    pub threads: usize,
}

impl CompressOptions {
    pub fn new(tau: f64) -> Self {
        Self { tau, output: Dtype::F64, threads: 1 }
    }
}

#[derive(Clone, Debug)]
pub struct Compressed {
    pub archive: Archive,
    pub bytes: Vec<u8>,
    /// What [`decompress`] will return, bit for bit.
    pub reconstruction: Vec<TensorField>,
    pub breakdown: ByteBreakdown,
}

/// Everything up to the error guarantee; independent of `tau`.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub members: Vec<MemberHeader>,
    pub latent: Vec<u8>,
    /// Codec output after the correction network, in data units.
    pub reconstruction: Vec<TensorField>,
    pub tc_applied: bool,
    /// Normalized mean squared error before and after the correction network.
    pub tc_mse: (f64, f64),
    pub basis: ResidualBasis,
}

/// Ordered map over `items` on up to `threads` scoped workers.
fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if threads <= 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let workers: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<R>>>())).collect();
        let mut out = Vec::with_capacity(items.len());
        for w in workers {
            out.extend(w.join().expect("block worker panicked")?);
        }
        Ok(out)
    })
}

fn mse(a: &TensorField, b: &TensorField) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Decodes quantized latents into a normalized field.
fn decode_member(codec: &Codec, grid: &BlockGrid, latents: &[Vec<f64>], threads: usize) -> Result<TensorField> {
    let decoded = par_map(latents, threads, |z| codec.decode_block(z))?;
    let mut blocks = Vec::with_capacity(decoded.len());
    for (origin, values) in grid.origins().zip(decoded) {
        blocks.push(crate::tensor::Block3D { origin, shape: grid.block_shape, values });
    }
    reassemble(&blocks, grid)
}

fn check_inputs(fields: &[TensorField]) -> Result<()> {
    if fields.is_empty() {
        return Err(Error::Shape("nothing to compress".into()));
    }
    for (i, f) in fields.iter().enumerate() {
        if fields[..i].iter().any(|g| g.member_id == f.member_id) {
            return Err(Error::Format(format!("duplicate member id {}", f.member_id)));
        }
    }
    Ok(())
}

/// Latent symbols of one member and their dequantized values, block by block.
pub fn encode_latents(codec: &Codec, normalized: &TensorField, quant: &QuantConfig, threads: usize) -> Result<(Vec<i64>, Vec<Vec<f64>>, BlockGrid)> {
    let (blocks, grid) = partition(normalized, codec.config().block_shape)?;
    let latents = par_map(&blocks, threads, |b| codec.encode_block(&b.values))?;
    let mut symbols = Vec::new();
    let mut dequantized = Vec::with_capacity(latents.len());
    for z in latents {
        let q = z.iter().map(|&v| quantize_uniform(v, quant)).collect::<Result<Vec<_>>>()?;
        dequantized.push(q.iter().map(|&s| dequantize_uniform(s, quant)).collect());
        symbols.extend(q);
    }
    Ok((symbols, dequantized, grid))
}

/// Encode, quantize and decode of one normalized field.
pub fn decode_normalized(codec: &Codec, normalized: &TensorField, quant: &QuantConfig, threads: usize) -> Result<TensorField> {
    let (_, latents, grid) = encode_latents(codec, normalized, quant, threads)?;
    decode_member(codec, &grid, &latents, threads)
}

/// Encodes, decodes and corrects every member, then fits the residual basis.
pub fn prepare(fields: &[TensorField], models: &TrainedModels, threads: usize) -> Result<Prepared> {
    check_inputs(fields)?;
    let cfg = &models.config;
    let mut members = Vec::with_capacity(fields.len());
    let mut symbols = Vec::new();
    let mut normalized = Vec::with_capacity(fields.len());
    let mut decoded = Vec::with_capacity(fields.len());
    for field in fields {
        let stats = NormStats::of(field)?;
        let norm = normalize(field, &stats)?;
        let (syms, latents, grid) = encode_latents(&models.codec, &norm, &cfg.latent_quant, threads)?;
        symbols.extend(syms);
        decoded.push(decode_member(&models.codec, &grid, &latents, threads)?);
        normalized.push(norm);
        members.push(MemberHeader { member_id: field.member_id, shape: field.shape, stats });
    }
    let corrected = decoded.iter().map(|d| tc_apply(&models.tc, d)).collect::<Result<Vec<_>>>()?;
    let before: f64 = normalized.iter().zip(&decoded).map(|(a, b)| mse(a, b)).sum();
    let after: f64 = normalized.iter().zip(&corrected).map(|(a, b)| mse(a, b)).sum();
    let tc_applied = after < before;
    let chosen = if tc_applied { corrected } else { decoded };
    let reconstruction = chosen.iter().zip(&members).map(|(f, m)| denormalize(f, &m.stats)).collect::<Result<Vec<_>>>()?;

    let gcfg = GuaranteeConfig { block_shape: cfg.guarantee_block, tau: f64::INFINITY, quant: cfg.coeff_quant, output: Dtype::F64 };
    let pairs: Vec<_> = fields.iter().zip(&reconstruction).collect();
    let basis = fit_basis(&pairs, &gcfg)?;
    let samples = normalized.iter().map(TensorField::len).sum::<usize>() as f64;
    Ok(Prepared {
        members,
        latent: encode_stream(&symbols)?.bytes,
        reconstruction,
        tc_applied,
        tc_mse: (before / samples, after / samples),
        basis,
    })
}

fn guarantee_config(models: &TrainedModels, tau: f64, output: Dtype) -> Result<GuaranteeConfig> {
    let cfg = GuaranteeConfig { block_shape: models.config.guarantee_block, tau, quant: models.config.coeff_quant, output };
    cfg.validate()?;
    Ok(cfg)
}

/// Applies the error guarantee for `tau` and assembles the archive.
pub fn finish(fields: &[TensorField], prepared: &Prepared, models: &TrainedModels, tau: f64, output: Dtype) -> Result<Compressed> {
    let gcfg = guarantee_config(models, tau, output)?;
    let mut records = Vec::new();
    let mut reconstruction = Vec::with_capacity(fields.len());
    for (field, recon) in fields.iter().zip(&prepared.reconstruction) {
        let (fixed, recs) = guarantee_field(field, recon, &prepared.basis, &gcfg, records.len())?;
        records.extend(recs);
        reconstruction.push(fixed);
    }
    let cfg = &models.config;
    let archive = Archive {
        codec: cfg.codec,
        model: cfg.model,
        diffusion_steps: cfg.diffusion_steps,
        beta_min: cfg.beta_min,
        beta_max: cfg.beta_max,
        latent_quant: cfg.latent_quant,
        coeff_quant: cfg.coeff_quant,
        guarantee_block: cfg.guarantee_block,
        tau,
        n_t: cfg.n_t,
        tc_applied: prepared.tc_applied,
        dtype: output,
        members: prepared.members.clone(),
        latent: prepared.latent.clone(),
        corrections: serialize_corrections(&records)?.bytes,
        basis: prepared.basis.to_bytes(),
        fingerprints: models.fingerprints().to_vec(),
    };
    let bytes = archive.to_bytes()?;
    let breakdown = archive.breakdown()?;
    Ok(Compressed { archive, bytes, reconstruction, breakdown })
}

pub fn compress(fields: &[TensorField], models: &TrainedModels, tau: f64) -> Result<Compressed> {
    compress_with(fields, models, &CompressOptions::new(tau))
}

pub fn compress_with(fields: &[TensorField], models: &TrainedModels, opts: &CompressOptions) -> Result<Compressed> {
    guarantee_config(models, opts.tau, opts.output)?;
    let prepared = prepare(fields, models, opts.threads)?;
    finish(fields, &prepared, models, opts.tau, opts.output)
}

/// Errors unless `archive` was written with exactly these models.
pub fn check_models(archive: &Archive, models: &TrainedModels) -> Result<()> {
    let cfg = &models.config;
    if archive.codec != cfg.codec
        || archive.model != cfg.model
        || archive.diffusion_steps != cfg.diffusion_steps
        || archive.beta_min != cfg.beta_min
        || archive.beta_max != cfg.beta_max
        || archive.latent_quant != cfg.latent_quant
        || archive.n_t != cfg.n_t
    {
        return Err(Error::ModelMismatch("archive header does not match the model configuration".into()));
    }
    if archive.fingerprints != models.fingerprints() {
        let names: Vec<_> = archive.fingerprints.iter().map(|f| format!("{} {}", f.name, f.hex())).collect();
        return Err(Error::ModelMismatch(format!("archive expects model files [{}]", names.join(", "))));
    }
    Ok(())
}

pub fn decompress(bytes: &[u8], models: &TrainedModels) -> Result<Vec<TensorField>> {
    decompress_with(bytes, models, 1)
}

pub fn decompress_with(bytes: &[u8], models: &TrainedModels, threads: usize) -> Result<Vec<TensorField>> {
    let archive = Archive::from_bytes(bytes)?;
    check_models(&archive, models)?;
    let gcfg = GuaranteeConfig { block_shape: archive.guarantee_block, tau: archive.tau, quant: archive.coeff_quant, output: archive.dtype };
    gcfg.validate()?;
    let basis = ResidualBasis::from_bytes(&archive.basis)?;
    if basis.len() != gcfg.block_len() {
        return Err(Error::Format(format!("basis of dimension {} for {}-sample blocks", basis.len(), gcfg.block_len())));
    }
    let symbols = decode_stream(&archive.latent)?;
    let latent_len = archive.model.latent_len();
    let mut grids = Vec::with_capacity(archive.members.len());
    for m in &archive.members {
        grids.push(BlockGrid::new(m.member_id, m.shape, archive.model.block_shape)?);
    }
    let expected: usize = grids.iter().map(|g| g.block_count() * latent_len).sum();
    if symbols.len() != expected {
        return Err(Error::Format(format!("{} latent symbols, header implies {expected}", symbols.len())));
    }
    let records = deserialize_corrections(&archive.corrections, gcfg.block_len())?;
    let guarantee_blocks: usize = archive
        .members
        .iter()
        .map(|m| BlockGrid::new(m.member_id, m.shape, gcfg.block_shape).map(|g| g.block_count()))
        .sum::<Result<usize>>()?;
    if records.len() != guarantee_blocks {
        return Err(Error::Format(format!("{} correction records for {guarantee_blocks} blocks", records.len())));
    }

    let (mut sym_at, mut rec_at) = (0, 0);
    let mut out = Vec::with_capacity(archive.members.len());
    for (m, grid) in archive.members.iter().zip(&grids) {
        let n = grid.block_count();
        let latents: Vec<Vec<f64>> = symbols[sym_at..sym_at + n * latent_len]
            .chunks(latent_len)
            .map(|c| c.iter().map(|&s| dequantize_uniform(s, &archive.latent_quant)).collect())
            .collect();
        sym_at += n * latent_len;
        let mut field = decode_member(&models.codec, grid, &latents, threads)?;
        if archive.tc_applied {
            field = tc_apply(&models.tc, &field)?;
        }
        let recon = denormalize(&field, &m.stats)?;
        let count = BlockGrid::new(m.member_id, m.shape, gcfg.block_shape)?.block_count();
        out.push(apply_corrections(&recon, &records[rec_at..rec_at + count], &basis, &gcfg)?);
        rec_at += count;
    }
    Ok(out)
}
