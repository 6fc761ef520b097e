//! Training, compression, decompression and evaluation end to end.

mod archive;
mod compress;
mod config;
mod evaluate;
mod metrics;
mod models;

pub use archive::{Archive, Fingerprint, MemberHeader, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use compress::{
    check_models, compress, compress_with, decode_normalized, decompress, decompress_with, encode_latents, finish, prepare, CompressOptions, Compressed,
    Prepared,
};
pub use config::PipelineConfig;
pub use evaluate::{evaluate, evaluate_reconstruction, rd_csv, sweep, EvalReport, RDPoint, RD_CSV_HEADER};
pub use metrics::{compression_ratio, nrmse, nrmse_many, ByteBreakdown};
pub use models::{TrainedModels, CODEC_FILE, CONFIG_FILE, TC_FILE};

use crate::correction::{extract_traces, tc_train_with, TraceSet};
use crate::diffusion::{train_codec, Codec};
use crate::error::{Error, Result};
use crate::tensor::{normalize, partition, NormStats, TensorField};

pub fn train(fields: &[TensorField], config: &PipelineConfig) -> Result<TrainedModels> {
    train_with(fields, config, 1)
}

/// Trains the codec on the normalized blocks of `fields`, then the correction
/// network on traces of the codec's own quantized reconstructions.
pub fn train_with(fields: &[TensorField], config: &PipelineConfig, threads: usize) -> Result<TrainedModels> {
    config.validate()?;
    if fields.is_empty() {
        return Err(Error::Shape("no training fields".into()));
    }
    let normalized = fields.iter().map(|f| normalize(f, &NormStats::of(f)?)).collect::<Result<Vec<_>>>()?;
    let mut blocks = Vec::new();
    for f in &normalized {
        blocks.extend(partition(f, config.model.block_shape)?.0.into_iter().map(|b| b.values));
    }
    let mut codec = Codec::new(config.codec, config.model, config.schedule()?, config.train.seed)?;
    let codec_losses = train_codec(&mut codec, &blocks, &config.train)?;

    let mut traces = TraceSet { n_t: config.n_t, original: Vec::new(), reconstructed: Vec::new() };
    for f in &normalized {
        let decoded = compress::decode_normalized(&codec, f, &config.latent_quant, threads)?;
        traces.extend(&extract_traces(f, &decoded, config.n_t)?)?;
    }
    let (tc, tc_losses) = tc_train_with(&traces, &config.tc)?;
    let mut models = TrainedModels::new(config.clone(), codec, tc)?;
    models.codec_losses = codec_losses;
    models.tc_losses = tc_losses;
    Ok(models)
}
