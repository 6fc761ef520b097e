//! Conditional diffusion codec: a 3D block encoder produces the latent `z`,
//! the embedder expands it to one conditioning map per depth slice, and a 2D
//! U-Net predicts the noise of each slice given its conditioning map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::layers::{Conv, ConvTranspose, Dense, GroupNorm, ResBlock};
use super::schedule::{reverse_step, NoiseSchedule};
use super::CodecConfig;
use crate::error::{Error, Result};
use crate::nn::{sinusoidal_time_embedding, AdamState, Graph, ParamStore, Tensor, Var};

/// Strided 3D convolutions: depth / 4, height and width / 8.
#[derive(Clone, Copy, Debug)]
pub struct Encoder3D {
    c1: Conv,
    c2: Conv,
    c3: Conv,
}

impl Encoder3D {
    pub(crate) fn new(store: &mut ParamStore, cfg: &CodecConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = cfg.encoder_width;
        Self {
            c1: Conv::new(store, "encoder.conv1", 1, w, [3, 3, 3], [2, 2, 2], [1, 1, 1], false, rng),
            c2: Conv::new(store, "encoder.conv2", w, w, [3, 3, 3], [2, 2, 2], [1, 1, 1], false, rng),
            c3: Conv::new(store, "encoder.conv3", w, cfg.latent_channels, [3, 3, 3], [1, 2, 2], [1, 1, 1], false, rng),
        }
    }

    /// `x: [N, 1, D, H, W]` to `z: [N, C_z, D/4, H/8, W/8]`.
    pub(crate) fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.c1.forward3d(g, store, x)?;
        let h = g.silu(h);
        let h = self.c2.forward3d(g, store, h)?;
        let h = g.silu(h);
        self.c3.forward3d(g, store, h)
    }
}

/// Restores the depth axis to `D` with a transposed 3D convolution, then
/// refines each depth slice with a 2D convolution.
#[derive(Clone, Copy, Debug)]
pub struct Embedder {
    up: ConvTranspose,
    conv: Conv,
}

impl Embedder {
    pub(crate) fn new(store: &mut ParamStore, cfg: &CodecConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            up: ConvTranspose::new(store, "embedder.up", cfg.latent_channels, cfg.embed_channels, [4, 2, 2], false, rng),
            conv: Conv::conv2d(store, "embedder.conv", cfg.embed_channels, cfg.embed_channels, 3, 1, rng),
        }
    }

    /// `z: [N, C_z, D/4, H/8, W/8]` to slices `[N*D, C_e, H/4, W/4]`.
    pub(crate) fn forward(&self, g: &mut Graph, store: &ParamStore, z: Var) -> Result<Var> {
        let h = self.up.forward3d(g, store, z)?;
        let h = g.silu(h);
        let h = g.to_slices(h)?;
        self.conv.forward2d(g, store, h)
    }
}

/// Two-level 2D U-Net predicting per-slice noise.
#[derive(Clone, Copy, Debug)]
pub struct DenoiseUNet2D {
    time1: Dense,
    time2: Dense,
    conv_in: Conv,
    res0: ResBlock,
    down0: Conv,
    res1: ResBlock,
    down1: Conv,
    mid: ResBlock,
    up1: ConvTranspose,
    res_up1: ResBlock,
    up0: ConvTranspose,
    res_up0: ResBlock,
    norm_out: GroupNorm,
    conv_out: Conv,
}

impl DenoiseUNet2D {
    pub(crate) fn new(store: &mut ParamStore, cfg: &CodecConfig, rng: &mut ChaCha8Rng) -> Self {
        let (w, td, gr) = (cfg.unet_width, cfg.time_dim, cfg.norm_groups);
        Self {
            time1: Dense::new(store, "unet.time1", td, td, rng),
            time2: Dense::new(store, "unet.time2", td, td, rng),
            conv_in: Conv::conv2d(store, "unet.conv_in", 1 + cfg.embed_channels, w, 3, 1, rng),
            res0: ResBlock::new(store, "unet.res0", w, w, td, gr, rng),
            down0: Conv::conv2d(store, "unet.down0", w, 2 * w, 3, 2, rng),
            res1: ResBlock::new(store, "unet.res1", 2 * w, 2 * w, td, gr, rng),
            down1: Conv::conv2d(store, "unet.down1", 2 * w, 2 * w, 3, 2, rng),
            mid: ResBlock::new(store, "unet.mid", 2 * w, 2 * w, td, gr, rng),
            up1: ConvTranspose::new(store, "unet.up1", 2 * w, 2 * w, [1, 2, 2], true, rng),
            res_up1: ResBlock::new(store, "unet.res_up1", 4 * w, 2 * w, td, gr, rng),
            up0: ConvTranspose::new(store, "unet.up0", 2 * w, 2 * w, [1, 2, 2], true, rng),
            res_up0: ResBlock::new(store, "unet.res_up0", 3 * w, w, td, gr, rng),
            norm_out: GroupNorm::new(store, "unet.norm_out", w, gr),
            conv_out: Conv::conv2d(store, "unet.conv_out", w, 1, 3, 1, rng),
        }
    }

    /// `x_t: [M, 1, H, W]`, `cond: [M, C_e, H, W]`, `steps: [M, time_dim]` sinusoidal codes.
    pub(crate) fn forward(&self, g: &mut Graph, store: &ParamStore, x_t: Var, cond: Var, steps: Var) -> Result<Var> {
        let t = self.time1.forward(g, store, steps)?;
        let t = g.silu(t);
        let t = self.time2.forward(g, store, t)?;
        let temb = g.silu(t);

        let x = g.concat_channels(x_t, cond)?;
        let h = self.conv_in.forward2d(g, store, x)?;
        let h0 = self.res0.forward(g, store, h, temb)?;
        let h = self.down0.forward2d(g, store, h0)?;
        let h1 = self.res1.forward(g, store, h, temb)?;
        let h = self.down1.forward2d(g, store, h1)?;
        let h = self.mid.forward(g, store, h, temb)?;
        let h = self.up1.forward2d(g, store, h)?;
        let h = g.concat_channels(h, h1)?;
        let h = self.res_up1.forward(g, store, h, temb)?;
        let h = self.up0.forward2d(g, store, h)?;
        let h = g.concat_channels(h, h0)?;
        let h = self.res_up0.forward(g, store, h, temb)?;
        let h = self.norm_out.forward(g, store, h)?;
        let h = g.silu(h);
        self.conv_out.forward2d(g, store, h)
    }
}

/// Encoder, embedder and denoiser trained jointly on the noise-prediction loss.
#[derive(Clone, Debug)]
pub struct GcdModel {
    config: CodecConfig,
    schedule: NoiseSchedule,
    pub params: ParamStore,
    encoder: Encoder3D,
    embedder: Embedder,
    unet: DenoiseUNet2D,
}

impl GcdModel {
    pub fn new(config: CodecConfig, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder3D::new(&mut params, &config, &mut rng);
        let embedder = Embedder::new(&mut params, &config, &mut rng);
        let unet = DenoiseUNet2D::new(&mut params, &config, &mut rng);
        Ok(Self { config, schedule, params, encoder, embedder, unet })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
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

    fn block_input(&self, blocks: &[&[f64]]) -> Tensor {
        let [d, h, w] = self.config.block_shape;
        let data = blocks.iter().flat_map(|b| b.iter().copied()).collect();
        Tensor { shape: vec![blocks.len(), 1, d, h, w], data }
    }

    fn step_codes(&self, steps: &[usize]) -> Result<Tensor> {
        let td = self.config.time_dim;
        let mut data = Vec::with_capacity(steps.len() * td);
        for &t in steps {
            data.extend(sinusoidal_time_embedding(t as f64, td)?);
        }
        Ok(Tensor { shape: vec![steps.len(), td], data })
    }

    /// Normalized `D x H_b x W_b` samples to the flattened latent `z`.
    pub fn encode_block(&self, block: &[f64]) -> Result<Vec<f64>> {
        self.check_block(block)?;
        let mut g = Graph::new();
        let x = g.input(self.block_input(&[block]));
        let z = self.encoder.forward(&mut g, &self.params, x)?;
        Ok(g.value(z).data.clone())
    }

    /// Per-slice conditioning `z^e` of shape `[D, C_e, H_b/4, W_b/4]`.
    pub fn embed(&self, latent: &[f64]) -> Result<Tensor> {
        let mut g = Graph::new();
        let z = self.latent_input(&mut g, latent)?;
        let ze = self.embedder.forward(&mut g, &self.params, z)?;
        Ok(g.value(ze).clone())
    }

    fn latent_input(&self, g: &mut Graph, latent: &[f64]) -> Result<Var> {
        if latent.len() != self.config.latent_len() {
            return Err(Error::Shape(format!(
                "latent has {} values, codec expects {:?}",
                latent.len(),
                self.config.latent_shape()
            )));
        }
        let mut shape = vec![1];
        shape.extend(self.config.latent_shape());
        Ok(g.input(Tensor { shape, data: latent.to_vec() }))
    }

    /// Conditioning upsampled to slice resolution: `[D, C_e, H_b, W_b]`.
    fn slice_conditioning(&self, latent: &[f64]) -> Result<Tensor> {
        let mut g = Graph::new();
        let z = self.latent_input(&mut g, latent)?;
        let ze = self.embedder.forward(&mut g, &self.params, z)?;
        let up = g.upsample_nearest(ze, 4)?;
        Ok(g.value(up).clone())
    }

    /// Noise prediction for slices `x_t: [M, 1, H, W]` at per-slice steps.
    pub fn predict_noise(&self, x_t: &Tensor, cond: &Tensor, steps: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.input(x_t.clone());
        let c = g.input(cond.clone());
        let s = g.input(self.step_codes(steps)?);
        let eps = self.unet.forward(&mut g, &self.params, x, c, s)?;
        Ok(g.value(eps).clone())
    }

    /// Deterministic reverse process from `x_T = 0`, one pass per depth slice.
    pub fn decode_block(&self, latent: &[f64]) -> Result<Vec<f64>> {
        let [d, h, w] = self.config.block_shape;
        let cond = self.slice_conditioning(latent)?;
        let mut x = vec![0.0; d * h * w];
        for t in (1..=self.schedule.steps()).rev() {
            let x_t = Tensor { shape: vec![d, 1, h, w], data: x.clone() };
            let eps = self.predict_noise(&x_t, &cond, &vec![t; d])?;
            if eps.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("noise prediction at step {t}")));
            }
            reverse_step(&mut x, &eps.data, t, &self.schedule);
        }
        Ok(x)
    }

    /// One joint update of encoder, embedder and U-Net on normalized blocks.
    ///
    /// Each depth slice draws its own step `t` and unit-normal noise.
    pub fn train_step(&mut self, adam: &mut AdamState, blocks: &[&[f64]], rng: &mut ChaCha8Rng) -> Result<f64> {
        let loss = self.loss_and_grad(blocks, rng)?;
        adam.step(&mut self.params)?;
        Ok(loss)
    }

    /// Loss on a batch with gradients accumulated into `params` (no update).
    pub fn loss_and_grad(&mut self, blocks: &[&[f64]], rng: &mut ChaCha8Rng) -> Result<f64> {
        if blocks.is_empty() {
            return Err(Error::Shape("empty training batch".into()));
        }
        for b in blocks {
            self.check_block(b)?;
        }
        let [d, h, w] = self.config.block_shape;
        let slices = blocks.len() * d;
        let plane = h * w;
        let total_steps = self.schedule.steps();

        let mut steps = Vec::with_capacity(slices);
        let mut noise = Vec::with_capacity(slices * plane);
        let mut noisy = Vec::with_capacity(slices * plane);
        for (i, slice) in blocks.iter().flat_map(|b| b.chunks_exact(plane)).enumerate() {
            debug_assert!(i < slices);
            let t = rng.random_range(1..=total_steps);
            let ab = self.schedule.alpha_bar(t);
            let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
            steps.push(t);
            for &x0 in slice {
                let e: f64 = rng.sample(StandardNormal);
                noise.push(e);
                noisy.push(s * x0 + n * e);
            }
        }

        let mut g = Graph::new();
        let x = g.input(self.block_input(blocks));
        let z = self.encoder.forward(&mut g, &self.params, x)?;
        let ze = self.embedder.forward(&mut g, &self.params, z)?;
        let cond = g.upsample_nearest(ze, 4)?;
        let x_t = g.input(Tensor { shape: vec![slices, 1, h, w], data: noisy });
        let codes = g.input(self.step_codes(&steps)?);
        let eps_hat = self.unet.forward(&mut g, &self.params, x_t, cond, codes)?;
        let target = g.input(Tensor { shape: vec![slices, 1, h, w], data: noise });
        let loss = g.mse(eps_hat, target)?;
        let value = g.value(loss).data[0];
        if !value.is_finite() {
            return Err(Error::NonFinite("diffusion training loss".into()));
        }
        g.backward(loss, &mut self.params)?;
        Ok(value)
    }
}
