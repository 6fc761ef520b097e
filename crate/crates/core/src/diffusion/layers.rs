//! Parameter bundles for the layers shared by the codecs.

use rand::Rng;

use crate::error::Result;
use crate::nn::{Graph, ParamId, ParamStore, Var};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl Conv {
    /// `kernel` is `[kd, kh, kw]`; 2D convolutions pass `kd = 1`.
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, kernel: [usize; 3], stride: [usize; 3], pad: [usize; 3], two_d: bool, rng: &mut impl Rng) -> Self {
        let fan_in = c_in * kernel.iter().product::<usize>();
        let shape: Vec<usize> = if two_d {
            vec![c_out, c_in, kernel[1], kernel[2]]
        } else {
            vec![c_out, c_in, kernel[0], kernel[1], kernel[2]]
        };
        let w = store.add_fan_in(format!("{name}.weight"), &shape, fan_in, rng);
        let b = store.add_const(format!("{name}.bias"), &[c_out], 0.0);
        Self { w, b, stride, pad }
    }

    pub fn conv2d(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize, rng: &mut impl Rng) -> Self {
        Self::new(store, name, c_in, c_out, [1, k, k], [1, stride, stride], [0, k / 2, k / 2], true, rng)
    }

    pub fn forward2d(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (w, b) = (g.param(store, self.w), g.param(store, self.b));
        g.conv2d(x, w, Some(b), self.stride[1], self.pad[1])
    }

    pub fn forward3d(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (w, b) = (g.param(store, self.w), g.param(store, self.b));
        g.conv3d(x, w, Some(b), self.stride, self.pad)
    }
}

/// Transposed convolution with kernel equal to stride (exact upsampling by `stride`).
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvTranspose {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: [usize; 3],
}

impl ConvTranspose {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, stride: [usize; 3], two_d: bool, rng: &mut impl Rng) -> Self {
        let shape: Vec<usize> = if two_d {
            vec![c_in, c_out, stride[1], stride[2]]
        } else {
            vec![c_in, c_out, stride[0], stride[1], stride[2]]
        };
        // Each output sample sees c_in inputs through a single kernel tap.
        let w = store.add_fan_in(format!("{name}.weight"), &shape, c_in, rng);
        let b = store.add_const(format!("{name}.bias"), &[c_out], 0.0);
        Self { w, b, stride }
    }

    pub fn forward2d(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (w, b) = (g.param(store, self.w), g.param(store, self.b));
        g.conv_transpose2d(x, w, Some(b), self.stride[1], 0)
    }

    pub fn forward3d(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (w, b) = (g.param(store, self.w), g.param(store, self.b));
        g.conv_transpose3d(x, w, Some(b), self.stride, [0, 0, 0])
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let w = store.add_fan_in(format!("{name}.weight"), &[d_out, d_in], d_in, rng);
        let b = store.add_const(format!("{name}.bias"), &[d_out], 0.0);
        Self { w, b }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (w, b) = (g.param(store, self.w), g.param(store, self.b));
        g.dense(x, w, Some(b))
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, groups: usize) -> Self {
        let gamma = store.add_const(format!("{name}.gamma"), &[channels], 1.0);
        let beta = store.add_const(format!("{name}.beta"), &[channels], 0.0);
        Self { gamma, beta, groups: largest_divisor_at_most(channels, groups) }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (gm, bt) = (g.param(store, self.gamma), g.param(store, self.beta));
        g.group_norm(x, gm, bt, self.groups)
    }
}

fn largest_divisor_at_most(n: usize, k: usize) -> usize {
    (1..=k.min(n).max(1)).rev().find(|d| n % d == 0).unwrap_or(1)
}

/// Pre-activation residual block with an additive time-embedding projection.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv,
    time: Dense,
    norm2: GroupNorm,
    conv2: Conv,
    skip: Option<Conv>,
}

impl ResBlock {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, time_dim: usize, groups: usize, rng: &mut impl Rng) -> Self {
        Self {
            norm1: GroupNorm::new(store, &format!("{name}.norm1"), c_in, groups),
            conv1: Conv::conv2d(store, &format!("{name}.conv1"), c_in, c_out, 3, 1, rng),
            time: Dense::new(store, &format!("{name}.time"), time_dim, c_out, rng),
            norm2: GroupNorm::new(store, &format!("{name}.norm2"), c_out, groups),
            conv2: Conv::conv2d(store, &format!("{name}.conv2"), c_out, c_out, 3, 1, rng),
            skip: (c_in != c_out).then(|| Conv::conv2d(store, &format!("{name}.skip"), c_in, c_out, 1, 1, rng)),
        }
    }

    /// `temb` is the already-activated `[N, time_dim]` embedding.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, temb: Var) -> Result<Var> {
        let h = self.norm1.forward(g, store, x)?;
        let h = g.silu(h);
        let h = self.conv1.forward2d(g, store, h)?;
        let t = self.time.forward(g, store, temb)?;
        let h = g.add_channel(h, t)?;
        let h = self.norm2.forward(g, store, h)?;
        let h = g.silu(h);
        let h = self.conv2.forward2d(g, store, h)?;
        let skip = match &self.skip {
            Some(c) => c.forward2d(g, store, x)?,
            None => x,
        };
        g.add(h, skip)
    }
}
