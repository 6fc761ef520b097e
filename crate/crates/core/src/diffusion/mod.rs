//! Learned block codecs: the conditional diffusion model and the autoencoder baseline.

mod ae;
mod gcd;
pub(crate) mod layers;
mod schedule;
mod train;

pub use ae::AeModel;
pub use gcd::{DenoiseUNet2D, Embedder, Encoder3D, GcdModel};
pub use schedule::{forward_sample, reverse_step, NoiseSchedule};
pub use train::{train_codec, TrainOptions};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// Network widths and block geometry shared by both codecs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodecConfig {
    /// `(D, H_b, W_b)` of a codec block.
    pub block_shape: [usize; 3],
    pub latent_channels: usize,
    pub embed_channels: usize,
    pub encoder_width: usize,
    pub unet_width: usize,
    pub time_dim: usize,
    pub norm_groups: usize,
}

impl CodecConfig {
    /// Full-size geometry: 16x64x64 blocks.
    pub fn paper() -> Self {
        Self {
            block_shape: [16, 64, 64],
            latent_channels: 8,
            embed_channels: 32,
            encoder_width: 32,
            unet_width: 32,
            time_dim: 64,
            norm_groups: 8,
        }
    }

    /// Laptop-scale geometry: 8x16x16 blocks and narrow layers.
    pub fn desk() -> Self {
        Self {
            block_shape: [8, 16, 16],
            latent_channels: 8,
            embed_channels: 16,
            encoder_width: 8,
            unet_width: 8,
            time_dim: 32,
            norm_groups: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [d, h, w] = self.block_shape;
        if d == 0 || d % 4 != 0 || h == 0 || h % 8 != 0 || w == 0 || w % 8 != 0 {
            return Err(Error::Config(format!(
                "block shape {:?} must have depth divisible by 4 and height/width divisible by 8",
                self.block_shape
            )));
        }
        if [self.latent_channels, self.embed_channels, self.encoder_width, self.unet_width, self.norm_groups]
            .contains(&0)
        {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(Error::Config(format!("time_dim {} must be even", self.time_dim)));
        }
        Ok(())
    }

    pub fn block_len(&self) -> usize {
        self.block_shape.iter().product()
    }

    /// `(C_z, D/4, H_b/8, W_b/8)`.
    pub fn latent_shape(&self) -> [usize; 4] {
        let [d, h, w] = self.block_shape;
        [self.latent_channels, d / 4, h / 8, w / 8]
    }

    pub fn latent_len(&self) -> usize {
        self.latent_shape().iter().product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodecKind {
    Gcd,
    Gcae,
}

impl CodecKind {
    pub fn code(self) -> u8 {
        match self {
            CodecKind::Gcd => 0,
            CodecKind::Gcae => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(CodecKind::Gcd),
            1 => Ok(CodecKind::Gcae),
            c => Err(Error::Format(format!("unknown codec kind {c}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodecKind::Gcd => "gcd",
            CodecKind::Gcae => "gcae",
        }
    }
}

impl std::str::FromStr for CodecKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcd" => Ok(CodecKind::Gcd),
            "gcae" => Ok(CodecKind::Gcae),
            other => Err(Error::Config(format!("unknown codec {other:?}, expected gcd or gcae"))),
        }
    }
}

/// Either learned codec behind one block-level interface.
#[derive(Clone, Debug)]
pub enum Codec {
    Gcd(GcdModel),
    Gcae(AeModel),
}

impl Codec {
    pub fn new(kind: CodecKind, config: CodecConfig, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        Ok(match kind {
            CodecKind::Gcd => Codec::Gcd(GcdModel::new(config, schedule, seed)?),
            CodecKind::Gcae => Codec::Gcae(AeModel::new(config, seed)?),
        })
    }

    pub fn kind(&self) -> CodecKind {
        match self {
            Codec::Gcd(_) => CodecKind::Gcd,
            Codec::Gcae(_) => CodecKind::Gcae,
        }
    }

    pub fn config(&self) -> &CodecConfig {
        match self {
            Codec::Gcd(m) => m.config(),
            Codec::Gcae(m) => m.config(),
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            Codec::Gcd(m) => &m.params,
            Codec::Gcae(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            Codec::Gcd(m) => &mut m.params,
            Codec::Gcae(m) => &mut m.params,
        }
    }

    /// Normalized block samples to the real-valued latent `z`.
    pub fn encode_block(&self, block: &[f64]) -> Result<Vec<f64>> {
        match self {
            Codec::Gcd(m) => m.encode_block(block),
            Codec::Gcae(m) => m.encode_block(block),
        }
    }

    /// Latent `z` back to normalized block samples.
    pub fn decode_block(&self, latent: &[f64]) -> Result<Vec<f64>> {
        match self {
            Codec::Gcd(m) => m.decode_block(latent),
            Codec::Gcae(m) => m.decode_block(latent),
        }
    }
}
