use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gcd::Encoder3D;
use super::layers::{Conv, ConvTranspose};
use super::CodecConfig;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Graph, ParamStore, Tensor, Var};

/// Convolutional autoencoder baseline. Encoder and first embedding unit match
/// the diffusion codec; a stack of transposed 3D convolutions replaces the
/// denoiser and emits the reconstruction directly.
#[derive(Clone, Debug)]
pub struct AeModel {
    config: CodecConfig,
    pub params: ParamStore,
    encoder: Encoder3D,
    embed_up: ConvTranspose,
    dec1: ConvTranspose,
    dec2: ConvTranspose,
    out: Conv,
}

impl AeModel {
    pub fn new(config: CodecConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder3D::new(&mut params, &config, &mut rng);
        let (ce, w) = (config.embed_channels, config.unet_width);
        let embed_up = ConvTranspose::new(&mut params, "embedder.up", config.latent_channels, ce, [4, 2, 2], false, &mut rng);
        let dec1 = ConvTranspose::new(&mut params, "decoder.up1", ce, w, [1, 2, 2], false, &mut rng);
        let dec2 = ConvTranspose::new(&mut params, "decoder.up2", w, w, [1, 2, 2], false, &mut rng);
        let out = Conv::new(&mut params, "decoder.out", w, 1, [3, 3, 3], [1, 1, 1], [1, 1, 1], false, &mut rng);
        Ok(Self { config, params, encoder, embed_up, dec1, dec2, out })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    fn check_block(&self, block: &[f64]) -> Result<()> {
        if block.len() != self.config.block_len() {
            return Err(Error::Shape(format!(
                "block has {} samples, codec expects {:?}",
                block.len(),
                self.config.block_shape
            )));
        }
        Ok(())
    }

    fn decoder(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let h = self.embed_up.forward3d(g, &self.params, z)?;
        let h = g.silu(h);
        let h = self.dec1.forward3d(g, &self.params, h)?;
        let h = g.silu(h);
        let h = self.dec2.forward3d(g, &self.params, h)?;
        let h = g.silu(h);
        self.out.forward3d(g, &self.params, h)
    }

    fn blocks_input(&self, blocks: &[&[f64]]) -> Tensor {
        let [d, h, w] = self.config.block_shape;
        Tensor {
            shape: vec![blocks.len(), 1, d, h, w],
            data: blocks.iter().flat_map(|b| b.iter().copied()).collect(),
        }
    }

    pub fn encode_block(&self, block: &[f64]) -> Result<Vec<f64>> {
        self.check_block(block)?;
        let mut g = Graph::new();
        let x = g.input(self.blocks_input(&[block]));
        let z = self.encoder.forward(&mut g, &self.params, x)?;
        Ok(g.value(z).data.clone())
    }

    pub fn decode_block(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.config.latent_len() {
            return Err(Error::Shape(format!(
                "latent has {} values, codec expects {:?}",
                latent.len(),
                self.config.latent_shape()
            )));
        }
        let mut shape = vec![1];
        shape.extend(self.config.latent_shape());
        let mut g = Graph::new();
        let z = g.input(Tensor { shape, data: latent.to_vec() });
        let y = self.decoder(&mut g, z)?;
        Ok(g.value(y).data.clone())
    }

    /// Encode-decode reconstruction of normalized blocks.
    pub fn reconstruct(&self, block: &[f64]) -> Result<Vec<f64>> {
        self.decode_block(&self.encode_block(block)?)
    }

    /// Loss on a batch with gradients accumulated into `params` (no update).
    pub fn loss_and_grad(&mut self, blocks: &[&[f64]]) -> Result<f64> {
        if blocks.is_empty() {
            return Err(Error::Shape("empty training batch".into()));
        }
        for b in blocks {
            self.check_block(b)?;
        }
        let mut g = Graph::new();
        let input = self.blocks_input(blocks);
        let x = g.input(input.clone());
        let z = self.encoder.forward(&mut g, &self.params, x)?;
        let y = self.decoder(&mut g, z)?;
        let target = g.input(input);
        let loss = g.mse(y, target)?;
        let value = g.value(loss).data[0];
        if !value.is_finite() {
            return Err(Error::NonFinite("autoencoder training loss".into()));
        }
        g.backward(loss, &mut self.params)?;
        Ok(value)
    }

    /// One MSE reconstruction update.
    pub fn train_step(&mut self, adam: &mut AdamState, blocks: &[&[f64]]) -> Result<f64> {
        let loss = self.loss_and_grad(blocks)?;
        adam.step(&mut self.params)?;
        Ok(loss)
    }
}
