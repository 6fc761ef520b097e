//! im2col-based 3D convolution kernels. 2D convolutions run through the same
//! code with a depth-1 volume and a depth-1 kernel.

use super::tensor::gemm;

/// Geometry of a strided, zero-padded convolution from `in_dims` to `out_dims`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub in_dims: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub out_dims: [usize; 3],
}

impl ConvGeom {
    pub fn forward(channels: usize, in_dims: [usize; 3], kernel: [usize; 3], stride: [usize; 3], pad: [usize; 3]) -> Option<Self> {
        let mut out_dims = [0; 3];
        for a in 0..3 {
            let padded = in_dims[a] + 2 * pad[a];
            if padded < kernel[a] || stride[a] == 0 {
                return None;
            }
            out_dims[a] = (padded - kernel[a]) / stride[a] + 1;
        }
        Some(Self { channels, in_dims, kernel, stride, pad, out_dims })
    }

    /// Geometry of the convolution whose adjoint maps `small_dims` up to a larger volume.
    pub fn transposed(channels: usize, small_dims: [usize; 3], kernel: [usize; 3], stride: [usize; 3], pad: [usize; 3]) -> Option<Self> {
        let mut big = [0; 3];
        for a in 0..3 {
            let full = (small_dims[a].checked_sub(1)?) * stride[a] + kernel[a];
            big[a] = full.checked_sub(2 * pad[a])?;
        }
        let g = Self::forward(channels, big, kernel, stride, pad)?;
        (g.out_dims == small_dims).then_some(g)
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel.iter().product::<usize>()
    }

    pub fn cols(&self) -> usize {
        self.out_dims.iter().product()
    }

    pub fn in_len(&self) -> usize {
        self.channels * self.in_dims.iter().product::<usize>()
    }
}

pub(crate) fn im2col(x: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let [di, hi, wi] = g.in_dims;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.out_dims;
    let p = g.cols();
    let mut row = 0;
    for c in 0..g.channels {
        let xc = &x[c * di * hi * wi..(c + 1) * di * hi * wi];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut col[row * p..(row + 1) * p];
                    let mut j = 0;
                    for zd in 0..od {
                        let id = (zd * g.stride[0] + a) as isize - g.pad[0] as isize;
                        for zh in 0..oh {
                            let ih = (zh * g.stride[1] + b) as isize - g.pad[1] as isize;
                            if id < 0 || id >= di as isize || ih < 0 || ih >= hi as isize {
                                dst[j..j + ow].fill(0.0);
                                j += ow;
                                continue;
                            }
                            let base = (id as usize * hi + ih as usize) * wi;
                            for zw in 0..ow {
                                let iw = (zw * g.stride[2] + e) as isize - g.pad[2] as isize;
                                dst[j] = if iw < 0 || iw >= wi as isize { 0.0 } else { xc[base + iw as usize] };
                                j += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters and accumulates columns into `x`.
pub(crate) fn col2im(col: &[f64], g: &ConvGeom, x: &mut [f64]) {
    let [di, hi, wi] = g.in_dims;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.out_dims;
    let p = g.cols();
    let mut row = 0;
    for c in 0..g.channels {
        let xc = &mut x[c * di * hi * wi..(c + 1) * di * hi * wi];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &col[row * p..(row + 1) * p];
                    let mut j = 0;
                    for zd in 0..od {
                        let id = (zd * g.stride[0] + a) as isize - g.pad[0] as isize;
                        for zh in 0..oh {
                            let ih = (zh * g.stride[1] + b) as isize - g.pad[1] as isize;
                            if id < 0 || id >= di as isize || ih < 0 || ih >= hi as isize {
                                j += ow;
                                continue;
                            }
                            let base = (id as usize * hi + ih as usize) * wi;
                            for zw in 0..ow {
                                let iw = (zw * g.stride[2] + e) as isize - g.pad[2] as isize;
                                if iw >= 0 && iw < wi as isize {
                                    xc[base + iw as usize] += src[j];
                                }
                                j += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// `y[n] = W * im2col(x[n]) + bias`; `weight` is `[c_out, rows]`.
pub(crate) fn conv_forward(x: &[f64], batch: usize, g: &ConvGeom, weight: &[f64], bias: Option<&[f64]>, c_out: usize) -> Vec<f64> {
    let (k, p) = (g.rows(), g.cols());
    let mut col = vec![0.0; k * p];
    let mut y = vec![0.0; batch * c_out * p];
    for n in 0..batch {
        im2col(&x[n * g.in_len()..(n + 1) * g.in_len()], g, &mut col);
        let yn = &mut y[n * c_out * p..(n + 1) * c_out * p];
        gemm(c_out, k, p, weight, false, &col, false, 0.0, yn);
        if let Some(bias) = bias {
            for (co, &bv) in bias.iter().enumerate() {
                yn[co * p..(co + 1) * p].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    y
}

/// Gradients of [`conv_forward`]; any output slot may be skipped with `None`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    x: &[f64],
    batch: usize,
    g: &ConvGeom,
    weight: &[f64],
    c_out: usize,
    dy: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let (k, p) = (g.rows(), g.cols());
    let mut col = vec![0.0; k * p];
    for n in 0..batch {
        let dyn_ = &dy[n * c_out * p..(n + 1) * c_out * p];
        if let Some(dw) = dw.as_deref_mut() {
            im2col(&x[n * g.in_len()..(n + 1) * g.in_len()], g, &mut col);
            gemm(c_out, p, k, dyn_, false, &col, true, 1.0, dw);
        }
        if let Some(db) = db.as_deref_mut() {
            for (co, d) in db.iter_mut().enumerate() {
                *d += dyn_[co * p..(co + 1) * p].iter().sum::<f64>();
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            gemm(k, c_out, p, weight, true, dyn_, false, 0.0, &mut col);
            col2im(&col, g, &mut dx[n * g.in_len()..(n + 1) * g.in_len()]);
        }
    }
}

/// Transposed convolution: `x` has `c_in` channels over `g.out_dims`, the
/// result has `g.channels` channels over `g.in_dims`. `weight` is `[c_in, rows]`.
pub(crate) fn conv_transpose_forward(x: &[f64], batch: usize, g: &ConvGeom, weight: &[f64], bias: Option<&[f64]>, c_in: usize) -> Vec<f64> {
    let (k, p) = (g.rows(), g.cols());
    let mut col = vec![0.0; k * p];
    let out_len = g.in_len();
    let spatial: usize = g.in_dims.iter().product();
    let mut y = vec![0.0; batch * out_len];
    for n in 0..batch {
        gemm(k, c_in, p, weight, true, &x[n * c_in * p..(n + 1) * c_in * p], false, 0.0, &mut col);
        let yn = &mut y[n * out_len..(n + 1) * out_len];
        col2im(&col, g, yn);
        if let Some(bias) = bias {
            for (co, &bv) in bias.iter().enumerate() {
                yn[co * spatial..(co + 1) * spatial].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose_backward(
    x: &[f64],
    batch: usize,
    g: &ConvGeom,
    weight: &[f64],
    c_in: usize,
    dy: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let (k, p) = (g.rows(), g.cols());
    let out_len = g.in_len();
    let spatial: usize = g.in_dims.iter().product();
    let mut col = vec![0.0; k * p];
    for n in 0..batch {
        let dyn_ = &dy[n * out_len..(n + 1) * out_len];
        im2col(dyn_, g, &mut col);
        if let Some(dx) = dx.as_deref_mut() {
            gemm(c_in, k, p, weight, false, &col, false, 1.0, &mut dx[n * c_in * p..(n + 1) * c_in * p]);
        }
        if let Some(dw) = dw.as_deref_mut() {
            gemm(c_in, p, k, &x[n * c_in * p..(n + 1) * c_in * p], false, &col, true, 1.0, dw);
        }
        if let Some(db) = db.as_deref_mut() {
            for (co, d) in db.iter_mut().enumerate() {
                *d += dyn_[co * spatial..(co + 1) * spatial].iter().sum::<f64>();
            }
        }
    }
}
