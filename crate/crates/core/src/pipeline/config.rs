use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::correction::TcOptions;
use crate::diffusion::{CodecConfig, CodecKind, NoiseSchedule, TrainOptions};
use crate::entropy::QuantConfig;
use crate::error::{Error, Result};

/// Every tunable of the pipeline. Serialized as flat `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub codec: CodecKind,
    pub model: CodecConfig,
    pub diffusion_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub train: TrainOptions,
    pub latent_quant: QuantConfig,
    pub coeff_quant: QuantConfig,
    pub guarantee_block: [usize; 3],
    pub n_t: usize,
    pub tc: TcOptions,
}

impl PipelineConfig {
    /// Full-size settings: 16x64x64 blocks, 1000 diffusion steps.
    pub fn paper() -> Self {
        Self {
            codec: CodecKind::Gcd,
            model: CodecConfig::paper(),
            diffusion_steps: 1000,
            beta_min: 1e-5,
            beta_max: 5e-3,
            train: TrainOptions::default(),
            latent_quant: QuantConfig::default(),
            coeff_quant: QuantConfig::default(),
            guarantee_block: [4, 4, 4],
            n_t: 60,
            tc: TcOptions::default(),
        }
    }

    /// Single-core laptop settings: 8x16x16 blocks, 200 diffusion steps. The
    /// betas are scaled by 5 so the final signal level matches 1000 steps.
    pub fn desk() -> Self {
        Self { model: CodecConfig::desk(), diffusion_steps: 200, beta_min: 5e-5, beta_max: 2.5e-2, n_t: 16, ..Self::paper() }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.diffusion_steps, self.beta_min, self.beta_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule()?;
        self.latent_quant.validate()?;
        self.coeff_quant.validate()?;
        if self.guarantee_block.contains(&0) {
            return Err(Error::Config(format!("guarantee block {:?} has a zero axis", self.guarantee_block)));
        }
        if self.n_t == 0 || self.train.batch_size == 0 || self.tc.batch_size == 0 {
            return Err(Error::Config("n_t and batch sizes must be positive".into()));
        }
        if !(self.train.lr > 0.0) || !(self.tc.lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "preset" => {
                *self = match value {
                    "desk" => Self::desk(),
                    "paper" => Self::paper(),
                    _ => return Err(Error::Config(format!("unknown preset {value:?}, expected desk or paper"))),
                }
            }
            "codec" => self.codec = value.parse()?,
            "block_shape" => self.model.block_shape = parse_shape(key, value)?,
            "latent_channels" => self.model.latent_channels = num(key, value)?,
            "embed_channels" => self.model.embed_channels = num(key, value)?,
            "encoder_width" => self.model.encoder_width = num(key, value)?,
            "unet_width" => self.model.unet_width = num(key, value)?,
            "time_dim" => self.model.time_dim = num(key, value)?,
            "norm_groups" => self.model.norm_groups = num(key, value)?,
            "diffusion_steps" => self.diffusion_steps = num(key, value)?,
            "beta_min" => self.beta_min = num(key, value)?,
            "beta_max" => self.beta_max = num(key, value)?,
            "train_steps" => self.train.steps = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "lr" => self.train.lr = num(key, value)?,
            "seed" => {
                self.train.seed = num(key, value)?;
                self.tc.seed = self.train.seed;
            }
            "quant_b" => self.latent_quant.b = num(key, value)?,
            "quant_a" => self.latent_quant.a = num(key, value)?,
            "coeff_quant_b" => self.coeff_quant.b = num(key, value)?,
            "coeff_quant_a" => self.coeff_quant.a = num(key, value)?,
            "guarantee_block" => self.guarantee_block = parse_shape(key, value)?,
            "n_t" => self.n_t = num(key, value)?,
            "tc_epochs" => self.tc.epochs = num(key, value)?,
            "tc_batch_size" => self.tc.batch_size = num(key, value)?,
            "tc_lr" => self.tc.lr = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the paper preset. A `preset` line
    /// resets everything before it. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::paper();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every setting, in a form [`PipelineConfig::parse`] reads back exactly.
    pub fn to_text(&self) -> String {
        let shape = |s: [usize; 3]| format!("{}x{}x{}", s[0], s[1], s[2]);
        let m = &self.model;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("codec", self.codec.name().into());
        line("block_shape", shape(m.block_shape));
        line("latent_channels", m.latent_channels.to_string());
        line("embed_channels", m.embed_channels.to_string());
        line("encoder_width", m.encoder_width.to_string());
        line("unet_width", m.unet_width.to_string());
        line("time_dim", m.time_dim.to_string());
        line("norm_groups", m.norm_groups.to_string());
        line("diffusion_steps", self.diffusion_steps.to_string());
        line("beta_min", format!("{:e}", self.beta_min));
        line("beta_max", format!("{:e}", self.beta_max));
        line("train_steps", self.train.steps.to_string());
        line("batch_size", self.train.batch_size.to_string());
        line("lr", format!("{:e}", self.train.lr));
        line("seed", self.train.seed.to_string());
        line("quant_b", self.latent_quant.b.to_string());
        line("quant_a", self.latent_quant.a.to_string());
        line("coeff_quant_b", self.coeff_quant.b.to_string());
        line("coeff_quant_a", self.coeff_quant.a.to_string());
        line("guarantee_block", shape(self.guarantee_block));
        line("n_t", self.n_t.to_string());
        line("tc_epochs", self.tc.epochs.to_string());
        line("tc_batch_size", self.tc.batch_size.to_string());
        line("tc_lr", format!("{:e}", self.tc.lr));
        out
    }
}

fn parse_shape(key: &str, value: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = value.split('x').map(str::trim).collect();
    let bad = || Error::Config(format!("{key}: expected DxHxW, got {value:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| bad())?;
    }
    Ok(out)
}
