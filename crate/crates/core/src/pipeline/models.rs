use std::fs;
use std::path::Path;

use super::archive::Fingerprint;
use super::config::PipelineConfig;
use crate::correction::TcNetwork;
use crate::diffusion::Codec;
use crate::error::{Error, Result};
use crate::nn::{decode_checkpoint, encode_checkpoint};

pub const CONFIG_FILE: &str = "model.cfg";
pub const CODEC_FILE: &str = "codec.ckpt";
pub const TC_FILE: &str = "tc.ckpt";

/// A trained codec and correction network with the configuration they were built from.
#[derive(Clone, Debug)]
pub struct TrainedModels {
    pub config: PipelineConfig,
    pub codec: Codec,
    pub tc: TcNetwork,
    /// Per-step codec training loss; empty for loaded models.
    pub codec_losses: Vec<f64>,
    /// Per-epoch correction network loss; empty for loaded models.
    pub tc_losses: Vec<f64>,
    files: Vec<Fingerprint>,
}

impl TrainedModels {
    pub fn new(config: PipelineConfig, codec: Codec, tc: TcNetwork) -> Result<Self> {
        let mut out = Self { config, codec, tc, codec_losses: Vec::new(), tc_losses: Vec::new(), files: Vec::new() };
        out.files = out.file_bytes()?.iter().map(|(n, b)| Fingerprint::of(n, b)).collect();
        Ok(out)
    }

    /// The model directory contents, name and bytes.
    pub fn file_bytes(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        Ok(vec![
            (CONFIG_FILE, self.config.to_text().into_bytes()),
            (CODEC_FILE, encode_checkpoint(self.codec.params())?),
            (TC_FILE, encode_checkpoint(&self.tc.params)?),
        ])
    }

    /// Hash and size of every model file, as stored in archives.
    pub fn fingerprints(&self) -> &[Fingerprint] {
        &self.files
    }

    pub fn model_bytes(&self) -> usize {
        self.files.iter().map(|f| f.size as usize).sum()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.file_bytes()? {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::Config(format!("model directory {} does not exist", dir.display())));
        }
        let read = |name: &str| fs::read(dir.join(name)).map_err(|e| Error::Config(format!("{}: {e}", dir.join(name).display())));
        let (cfg_bytes, codec_bytes, tc_bytes) = (read(CONFIG_FILE)?, read(CODEC_FILE)?, read(TC_FILE)?);
        let text = std::str::from_utf8(&cfg_bytes).map_err(|_| Error::Config(format!("{CONFIG_FILE} is not UTF-8")))?;
        let config = PipelineConfig::parse(text)?;
        let mut codec = Codec::new(config.codec, config.model, config.schedule()?, 0)?;
        codec.params_mut().load_values(&decode_checkpoint(&codec_bytes)?)?;
        let tc = TcNetwork::from_params(&decode_checkpoint(&tc_bytes)?)?;
        if tc.n_t() != config.n_t {
            return Err(Error::ModelMismatch(format!("{TC_FILE} has trace length {}, config says {}", tc.n_t(), config.n_t)));
        }
        let files = vec![
            Fingerprint::of(CONFIG_FILE, &cfg_bytes),
            Fingerprint::of(CODEC_FILE, &codec_bytes),
            Fingerprint::of(TC_FILE, &tc_bytes),
        ];
        Ok(Self { config, codec, tc, codec_losses: Vec::new(), tc_losses: Vec::new(), files })
    }
}
