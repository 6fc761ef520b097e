//! Define-by-run reverse-mode differentiation.
//!
//! Every op evaluates eagerly and appends a node to the tape, so node ids are
//! a topological order by construction. [`Graph::backward`] walks the tape in
//! reverse and accumulates parameter gradients into the [`ParamStore`].

use super::conv::{self, ConvGeom};
use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

const GN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        batch: usize,
        c_out: usize,
    },
    ConvTranspose {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        batch: usize,
        c_in: usize,
    },
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
        batch: usize,
        d_in: usize,
        d_out: usize,
    },
    Silu(Var),
    Add(Var, Var),
    AddChannel {
        x: Var,
        v: Var,
        spatial: usize,
    },
    Concat {
        a: Var,
        b: Var,
        batch: usize,
        a_len: usize,
        b_len: usize,
    },
    Upsample {
        x: Var,
        factor: usize,
        planes: usize,
        h: usize,
        w: usize,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        batch: usize,
        channels: usize,
        spatial: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Reshape(Var),
    SwapAxes {
        x: Var,
        n: usize,
        a: usize,
        b: usize,
        rest: usize,
    },
    Mse(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, msg: String) -> Error {
    Error::Shape(format!("{op}: {msg}"))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Param(_) => true,
            Op::Leaf => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, &[])
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id), &[])
    }

    fn check_bias(&self, op: &str, b: Option<Var>, len: usize) -> Result<()> {
        if let Some(b) = b {
            if self.shape(b) != [len] {
                return Err(shape_err(op, format!("bias {:?} for {len} channels", self.shape(b))));
            }
        }
        Ok(())
    }

    /// `x: [N, C, H, W]`, `w: [C_out, C, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 {
            return Err(shape_err("conv2d", format!("input {xs:?}, weight {ws:?}")));
        }
        self.conv_nd("conv2d", x, w, b, [xs[0], xs[1], 1, xs[2], xs[3]], [ws[0], ws[1], 1, ws[2], ws[3]], [1, stride, stride], [0, pad, pad], 4)
    }

    /// `x: [N, C, D, H, W]`, `w: [C_out, C, kd, kh, kw]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, stride: [usize; 3], pad: [usize; 3]) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 5 || ws.len() != 5 {
            return Err(shape_err("conv3d", format!("input {xs:?}, weight {ws:?}")));
        }
        self.conv_nd("conv3d", x, w, b, [xs[0], xs[1], xs[2], xs[3], xs[4]], [ws[0], ws[1], ws[2], ws[3], ws[4]], stride, pad, 5)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_nd(&mut self, op: &str, x: Var, w: Var, b: Option<Var>, xs: [usize; 5], ws: [usize; 5], stride: [usize; 3], pad: [usize; 3], rank: usize) -> Result<Var> {
        if xs[1] != ws[1] {
            return Err(shape_err(op, format!("input has {} channels, weight expects {}", xs[1], ws[1])));
        }
        let geom = ConvGeom::forward(xs[1], [xs[2], xs[3], xs[4]], [ws[2], ws[3], ws[4]], stride, pad)
            .ok_or_else(|| shape_err(op, format!("kernel {ws:?} does not fit input {xs:?}")))?;
        self.check_bias(op, b, ws[0])?;
        let bias = b.map(|b| self.value(b).data.as_slice());
        let y = conv::conv_forward(&self.value(x).data, xs[0], &geom, &self.value(w).data, bias, ws[0]);
        let [od, oh, ow] = geom.out_dims;
        let shape = if rank == 4 { vec![xs[0], ws[0], oh, ow] } else { vec![xs[0], ws[0], od, oh, ow] };
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(Tensor { shape, data: y }, Op::Conv { x, w, b, geom, batch: xs[0], c_out: ws[0] }, &inputs))
    }

    /// `x: [N, C, H, W]`, `w: [C, C_out, kh, kw]`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 {
            return Err(shape_err("conv_transpose2d", format!("input {xs:?}, weight {ws:?}")));
        }
        self.conv_t_nd("conv_transpose2d", x, w, b, [xs[0], xs[1], 1, xs[2], xs[3]], [ws[0], ws[1], 1, ws[2], ws[3]], [1, stride, stride], [0, pad, pad], 4)
    }

    /// `x: [N, C, D, H, W]`, `w: [C, C_out, kd, kh, kw]`.
    pub fn conv_transpose3d(&mut self, x: Var, w: Var, b: Option<Var>, stride: [usize; 3], pad: [usize; 3]) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 5 || ws.len() != 5 {
            return Err(shape_err("conv_transpose3d", format!("input {xs:?}, weight {ws:?}")));
        }
        self.conv_t_nd("conv_transpose3d", x, w, b, [xs[0], xs[1], xs[2], xs[3], xs[4]], [ws[0], ws[1], ws[2], ws[3], ws[4]], stride, pad, 5)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_t_nd(&mut self, op: &str, x: Var, w: Var, b: Option<Var>, xs: [usize; 5], ws: [usize; 5], stride: [usize; 3], pad: [usize; 3], rank: usize) -> Result<Var> {
        if xs[1] != ws[0] {
            return Err(shape_err(op, format!("input has {} channels, weight expects {}", xs[1], ws[0])));
        }
        let geom = ConvGeom::transposed(ws[1], [xs[2], xs[3], xs[4]], [ws[2], ws[3], ws[4]], stride, pad)
            .ok_or_else(|| shape_err(op, format!("kernel {ws:?} with stride {stride:?} does not fit input {xs:?}")))?;
        self.check_bias(op, b, ws[1])?;
        let bias = b.map(|b| self.value(b).data.as_slice());
        let y = conv::conv_transpose_forward(&self.value(x).data, xs[0], &geom, &self.value(w).data, bias, ws[0]);
        let [od, oh, ow] = geom.in_dims;
        let shape = if rank == 4 { vec![xs[0], ws[1], oh, ow] } else { vec![xs[0], ws[1], od, oh, ow] };
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(Tensor { shape, data: y }, Op::ConvTranspose { x, w, b, geom, batch: xs[0], c_in: ws[0] }, &inputs))
    }

    /// `x: [N, in]`, `w: [out, in]`, result `x w^T + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(shape_err("dense", format!("input {xs:?}, weight {ws:?}")));
        }
        self.check_bias("dense", b, ws[0])?;
        let (n, d_in, d_out) = (xs[0], xs[1], ws[0]);
        let mut y = vec![0.0; n * d_out];
        gemm(n, d_in, d_out, &self.value(x).data, false, &self.value(w).data, true, 0.0, &mut y);
        if let Some(b) = b {
            let bias = &self.value(b).data;
            for row in y.chunks_exact_mut(d_out) {
                row.iter_mut().zip(bias).for_each(|(v, bv)| *v += bv);
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(Tensor { shape: vec![n, d_out], data: y }, Op::Dense { x, w, b, batch: n, d_in, d_out }, &inputs))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data.iter().map(|&a| a / (1.0 + (-a).exp())).collect();
        let shape = v.shape.clone();
        self.push(Tensor { shape, data }, Op::Silu(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data.iter().zip(&self.value(b).data).map(|(p, q)| p + q).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, data }, Op::Add(a, b), &[a, b]))
    }

    /// Adds `v: [N, C]` to every spatial position of `x: [N, C, ...]`.
    pub fn add_channel(&mut self, x: Var, v: Var) -> Result<Var> {
        let (xs, vs) = (self.shape(x).to_vec(), self.shape(v).to_vec());
        if xs.len() < 2 || vs != xs[..2] {
            return Err(shape_err("add_channel", format!("{xs:?} vs {vs:?}")));
        }
        let spatial: usize = xs[2..].iter().product();
        let mut data = self.value(x).data.clone();
        for (chunk, &bv) in data.chunks_exact_mut(spatial.max(1)).zip(&self.value(v).data) {
            chunk.iter_mut().for_each(|a| *a += bv);
        }
        Ok(self.push(Tensor { shape: xs, data }, Op::AddChannel { x, v, spatial }, &[x, v]))
    }

    /// Concatenates along axis 1.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(shape_err("concat_channels", format!("{sa:?} vs {sb:?}")));
        }
        let batch = sa[0];
        let a_len = self.value(a).len() / batch;
        let b_len = self.value(b).len() / batch;
        let mut data = Vec::with_capacity(batch * (a_len + b_len));
        for n in 0..batch {
            data.extend_from_slice(&self.value(a).data[n * a_len..(n + 1) * a_len]);
            data.extend_from_slice(&self.value(b).data[n * b_len..(n + 1) * b_len]);
        }
        let mut shape = sa.clone();
        shape[1] += sb[1];
        Ok(self.push(Tensor { shape, data }, Op::Concat { a, b, batch, a_len, b_len }, &[a, b]))
    }

    /// Nearest-neighbour upsampling of the last two axes by `factor`.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 3 || factor == 0 {
            return Err(shape_err("upsample_nearest", format!("{xs:?} by {factor}")));
        }
        let (h, w) = (xs[xs.len() - 2], xs[xs.len() - 1]);
        let planes: usize = xs[..xs.len() - 2].iter().product();
        let (oh, ow) = (h * factor, w * factor);
        let src = &self.value(x).data;
        let mut data = vec![0.0; planes * oh * ow];
        for p in 0..planes {
            for i in 0..oh {
                let srow = &src[(p * h + i / factor) * w..(p * h + i / factor + 1) * w];
                let drow = &mut data[(p * oh + i) * ow..(p * oh + i + 1) * ow];
                for (j, d) in drow.iter_mut().enumerate() {
                    *d = srow[j / factor];
                }
            }
        }
        let mut shape = xs.clone();
        let r = shape.len();
        shape[r - 2] = oh;
        shape[r - 1] = ow;
        Ok(self.push(Tensor { shape, data }, Op::Upsample { x, factor, planes, h, w }, &[x]))
    }

    /// Group normalization over `x: [N, C, ...]` with per-channel affine `gamma`, `beta`.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || groups == 0 || xs[1] % groups != 0 {
            return Err(shape_err("group_norm", format!("{xs:?} with {groups} groups")));
        }
        let (batch, channels) = (xs[0], xs[1]);
        if self.shape(gamma) != [channels] || self.shape(beta) != [channels] {
            return Err(shape_err("group_norm", format!("affine params for {channels} channels")));
        }
        let spatial: usize = xs[2..].iter().product();
        let group_len = channels / groups * spatial;
        let src = &self.value(x).data;
        let (g_data, b_data) = (&self.value(gamma).data, &self.value(beta).data);
        let mut xhat = vec![0.0; src.len()];
        let mut inv_std = vec![0.0; batch * groups];
        let mut data = vec![0.0; src.len()];
        for (gi, chunk) in src.chunks_exact(group_len).enumerate() {
            let mean = chunk.iter().sum::<f64>() / group_len as f64;
            let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / group_len as f64;
            let is = 1.0 / (var + GN_EPS).sqrt();
            inv_std[gi] = is;
            let base = gi * group_len;
            for (j, &v) in chunk.iter().enumerate() {
                let idx = base + j;
                let c = (idx / spatial) % channels;
                let h = (v - mean) * is;
                xhat[idx] = h;
                data[idx] = g_data[c] * h + b_data[c];
            }
        }
        Ok(self.push(
            Tensor { shape: xs, data },
            Op::GroupNorm { x, gamma, beta, groups, batch, channels, spatial, xhat, inv_std },
            &[x, gamma, beta],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(shape_err("reshape", format!("{:?} -> {shape:?}", self.shape(x))));
        }
        let data = self.value(x).data.clone();
        Ok(self.push(Tensor { shape: shape.to_vec(), data }, Op::Reshape(x), &[x]))
    }

    fn swap_axes(&mut self, x: Var, n: usize, a: usize, b: usize, rest: usize, shape: Vec<usize>) -> Var {
        let data = swap12(&self.value(x).data, n, a, b, rest);
        self.push(Tensor { shape, data }, Op::SwapAxes { x, n, a, b, rest }, &[x])
    }

    /// `[N, C, D, H, W] -> [N*D, C, H, W]`: one 2D image per depth slice.
    pub fn to_slices(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 5 {
            return Err(shape_err("to_slices", format!("{xs:?}")));
        }
        let [n, c, d, h, w] = [xs[0], xs[1], xs[2], xs[3], xs[4]];
        Ok(self.swap_axes(x, n, c, d, h * w, vec![n * d, c, h, w]))
    }

    /// Inverse of [`Graph::to_slices`] for slices of `depth`.
    pub fn from_slices(&mut self, x: Var, depth: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || depth == 0 || xs[0] % depth != 0 {
            return Err(shape_err("from_slices", format!("{xs:?} with depth {depth}")));
        }
        let n = xs[0] / depth;
        let [c, h, w] = [xs[1], xs[2], xs[3]];
        Ok(self.swap_axes(x, n, depth, c, h * w, vec![n, c, depth, h, w]))
    }

    /// Mean of squared differences; `target` may be a constant input.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(shape_err("mse", format!("{:?} vs {:?}", self.shape(pred), self.shape(target))));
        }
        let n = self.value(pred).len() as f64;
        let s: f64 = self.value(pred).data.iter().zip(&self.value(target).data).map(|(p, q)| (p - q) * (p - q)).sum();
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(pred, target), &[pred, target]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Backpropagates from `out` seeded with ones.
    pub fn backward(&self, out: Var, store: &mut ParamStore) -> Result<()> {
        let seed = Tensor::filled(&self.nodes[out.0].value.shape, 1.0);
        self.backward_with(out, seed, store)
    }

    /// Backpropagates `grad` from `out` and adds parameter gradients into `store`.
    pub fn backward_with(&self, out: Var, grad: Tensor, store: &mut ParamStore) -> Result<()> {
        if grad.shape != self.nodes[out.0].value.shape {
            return Err(shape_err("backward", format!("seed {:?} for output {:?}", grad.shape, self.nodes[out.0].value.shape)));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(grad.data);
        for i in (0..=out.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &dy, &mut grads, store)?;
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
        grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()])
    }

    fn propagate(&self, node: &Node, dy: &[f64], grads: &mut [Option<Vec<f64>>], store: &mut ParamStore) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                let p = store.get_mut(*id);
                if p.trainable {
                    p.grad.iter_mut().zip(dy).for_each(|(g, d)| *g += d);
                }
            }
            Op::Conv { x, w, b, geom, batch, c_out } => {
                let mut gx = self.wants(*x).then(|| std::mem::take(self.slot(grads, *x)));
                let mut gw = self.wants(*w).then(|| std::mem::take(self.slot(grads, *w)));
                let mut gb = b.filter(|b| self.wants(*b)).map(|b| std::mem::take(self.slot(grads, b)));
                conv::conv_backward(
                    &self.value(*x).data,
                    *batch,
                    geom,
                    &self.value(*w).data,
                    *c_out,
                    dy,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                if let Some(g) = gx {
                    grads[x.0] = Some(g);
                }
                if let Some(g) = gw {
                    grads[w.0] = Some(g);
                }
                if let (Some(g), Some(b)) = (gb, b) {
                    grads[b.0] = Some(g);
                }
            }
            Op::ConvTranspose { x, w, b, geom, batch, c_in } => {
                let mut gx = self.wants(*x).then(|| std::mem::take(self.slot(grads, *x)));
                let mut gw = self.wants(*w).then(|| std::mem::take(self.slot(grads, *w)));
                let mut gb = b.filter(|b| self.wants(*b)).map(|b| std::mem::take(self.slot(grads, b)));
                conv::conv_transpose_backward(
                    &self.value(*x).data,
                    *batch,
                    geom,
                    &self.value(*w).data,
                    *c_in,
                    dy,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                if let Some(g) = gx {
                    grads[x.0] = Some(g);
                }
                if let Some(g) = gw {
                    grads[w.0] = Some(g);
                }
                if let (Some(g), Some(b)) = (gb, b) {
                    grads[b.0] = Some(g);
                }
            }
            Op::Dense { x, w, b, batch, d_in, d_out } => {
                if self.wants(*x) {
                    let wv = &self.value(*w).data;
                    gemm(*batch, *d_out, *d_in, dy, false, wv, false, 1.0, self.slot(grads, *x));
                }
                if self.wants(*w) {
                    let xv = &self.value(*x).data;
                    gemm(*d_out, *batch, *d_in, dy, true, xv, false, 1.0, self.slot(grads, *w));
                }
                if let Some(b) = b.filter(|b| self.wants(*b)) {
                    let gb = self.slot(grads, b);
                    for row in dy.chunks_exact(*d_out) {
                        gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
                    }
                }
            }
            Op::Silu(x) => {
                if self.wants(*x) {
                    let xv = &self.value(*x).data;
                    let gx = self.slot(grads, *x);
                    for ((g, &a), d) in gx.iter_mut().zip(xv).zip(dy) {
                        let s = 1.0 / (1.0 + (-a).exp());
                        *g += d * s * (1.0 + a * (1.0 - s));
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        self.slot(grads, *v).iter_mut().zip(dy).for_each(|(g, d)| *g += d);
                    }
                }
            }
            Op::AddChannel { x, v, spatial } => {
                if self.wants(*x) {
                    self.slot(grads, *x).iter_mut().zip(dy).for_each(|(g, d)| *g += d);
                }
                if self.wants(*v) {
                    let gv = self.slot(grads, *v);
                    for (g, chunk) in gv.iter_mut().zip(dy.chunks_exact((*spatial).max(1))) {
                        *g += chunk.iter().sum::<f64>();
                    }
                }
            }
            Op::Concat { a, b, batch, a_len, b_len } => {
                let stride = a_len + b_len;
                if self.wants(*a) {
                    let ga = self.slot(grads, *a);
                    for n in 0..*batch {
                        let src = &dy[n * stride..n * stride + a_len];
                        ga[n * a_len..(n + 1) * a_len].iter_mut().zip(src).for_each(|(g, d)| *g += d);
                    }
                }
                if self.wants(*b) {
                    let gb = self.slot(grads, *b);
                    for n in 0..*batch {
                        let src = &dy[n * stride + a_len..(n + 1) * stride];
                        gb[n * b_len..(n + 1) * b_len].iter_mut().zip(src).for_each(|(g, d)| *g += d);
                    }
                }
            }
            Op::Upsample { x, factor, planes, h, w } => {
                if self.wants(*x) {
                    let gx = self.slot(grads, *x);
                    let (oh, ow) = (h * factor, w * factor);
                    for p in 0..*planes {
                        for i in 0..oh {
                            let drow = &dy[(p * oh + i) * ow..(p * oh + i + 1) * ow];
                            let base = (p * h + i / factor) * w;
                            for (j, d) in drow.iter().enumerate() {
                                gx[base + j / factor] += d;
                            }
                        }
                    }
                }
            }
            Op::GroupNorm { x, gamma, beta, groups, batch, channels, spatial, xhat, inv_std } => {
                let g_data = &self.value(*gamma).data;
                if self.wants(*gamma) {
                    let gg = self.slot(grads, *gamma);
                    for (idx, (d, h)) in dy.iter().zip(xhat).enumerate() {
                        gg[(idx / spatial) % channels] += d * h;
                    }
                }
                if self.wants(*beta) {
                    let gb = self.slot(grads, *beta);
                    for (idx, d) in dy.iter().enumerate() {
                        gb[(idx / spatial) % channels] += d;
                    }
                }
                if self.wants(*x) {
                    let group_len = channels / groups * spatial;
                    let gx = self.slot(grads, *x);
                    for gi in 0..batch * groups {
                        let base = gi * group_len;
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..group_len {
                            let idx = base + j;
                            let dh = dy[idx] * g_data[(idx / spatial) % channels];
                            s1 += dh;
                            s2 += dh * xhat[idx];
                        }
                        let m = group_len as f64;
                        let scale = inv_std[gi] / m;
                        for j in 0..group_len {
                            let idx = base + j;
                            let dh = dy[idx] * g_data[(idx / spatial) % channels];
                            gx[idx] += scale * (m * dh - s1 - xhat[idx] * s2);
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if self.wants(*x) {
                    self.slot(grads, *x).iter_mut().zip(dy).for_each(|(g, d)| *g += d);
                }
            }
            Op::SwapAxes { x, n, a, b, rest } => {
                if self.wants(*x) {
                    let back = swap12(dy, *n, *b, *a, *rest);
                    self.slot(grads, *x).iter_mut().zip(&back).for_each(|(g, d)| *g += d);
                }
            }
            Op::Mse(p, q) => {
                let pv = &self.value(*p).data;
                let qv = &self.value(*q).data;
                let scale = 2.0 * dy[0] / pv.len() as f64;
                if self.wants(*p) {
                    let gp = self.slot(grads, *p);
                    for ((g, a), b) in gp.iter_mut().zip(pv).zip(qv) {
                        *g += scale * (a - b);
                    }
                }
                if self.wants(*q) {
                    let gq = self.slot(grads, *q);
                    for ((g, a), b) in gq.iter_mut().zip(pv).zip(qv) {
                        *g -= scale * (a - b);
                    }
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    self.slot(grads, *x).iter_mut().for_each(|g| *g += dy[0]);
                }
            }
        }
        Ok(())
    }
}

/// `[n, a, b, rest] -> [n, b, a, rest]`.
fn swap12(src: &[f64], n: usize, a: usize, b: usize, rest: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for i in 0..n {
        for j in 0..a {
            for k in 0..b {
                let s = ((i * a + j) * b + k) * rest;
                let d = ((i * b + k) * a + j) * rest;
                out[d..d + rest].copy_from_slice(&src[s..s + rest]);
            }
        }
    }
    out
}
