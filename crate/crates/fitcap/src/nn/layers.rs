//! Layers with explicit forward caches and backward passes.
//!
//! Image tensors are `(batch, channels, height, width)`; feature tensors
//! are `(batch, features)`.

use fitcap_core::Rng;
use rand::Rng as _;
use rand::SeedableRng;

use super::gemm::{gemm, Op};
use super::{Init, Param, Tensor};

pub trait Layer: Send + Sync {
    fn name(&self) -> String;

    /// Output shape for one item of the given per-item input shape.
    fn output_shape(&self, input: &[usize]) -> Vec<usize>;

    /// Forward pass that keeps whatever the backward pass needs.
    fn forward(&mut self, x: Tensor, train: bool) -> Tensor;

    /// Inference-mode forward pass with no side effects.
    fn infer(&self, x: &Tensor) -> Tensor;

    /// Gradient with respect to the input of the last `forward`; parameter
    /// gradients are accumulated.
    fn backward(&mut self, grad: Tensor) -> Tensor;

    /// Backward pass for a caller that has no use for the input gradient.
    fn backward_params(&mut self, grad: Tensor) {
        self.backward(grad);
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    /// Non-trainable state that must survive a checkpoint.
    fn buffers(&self) -> Vec<&Vec<f32>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Vec<f32>> {
        Vec::new()
    }
}

// ---------------------------------------------------------------------------
// im2col helpers

/// Maps an image of `channels x img_h x img_w` to patches of a `k x k`
/// kernel sliding with `stride`/`pad`, producing `col_h x col_w` positions.
#[derive(Debug, Clone, Copy)]
struct Patches {
    channels: usize,
    img_h: usize,
    img_w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    col_h: usize,
    col_w: usize,
}

impl Patches {
    fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.col_h * self.col_w
    }

    /// Output positions `o` in `0..n_out` whose source `o * stride + k - pad`
    /// lands inside `0..size`.
    fn valid_range(&self, kk: usize, size: usize, n_out: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.pad as isize);
        let off = kk as isize - p;
        // smallest o with o*s + off >= 0
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        // largest o with o*s + off <= size - 1, plus one
        let hi = if (size as isize - 1 - off) < 0 { 0 } else { (size as isize - 1 - off) / s + 1 };
        let lo = (lo as usize).min(n_out);
        (lo, (hi as usize).clamp(lo, n_out))
    }

    /// `img` is `(batch, channels, img_h, img_w)`; the result is
    /// `(channels * k * k, batch * col_h * col_w)`.
    fn im2col(&self, batch: usize, img: &[f32]) -> Vec<f32> {
        let l = self.positions();
        let width = batch * l;
        let mut cols = vec![0.0f32; self.rows() * width];
        let plane = self.img_h * self.img_w;
        let s = self.stride;
        for c in 0..self.channels {
            for ki in 0..self.k {
                let (y_lo, y_hi) = self.valid_range(ki, self.img_h, self.col_h);
                for kj in 0..self.k {
                    let (x_lo, x_hi) = self.valid_range(kj, self.img_w, self.col_w);
                    if x_lo >= x_hi {
                        continue;
                    }
                    let r = (c * self.k + ki) * self.k + kj;
                    let dst_row = &mut cols[r * width..(r + 1) * width];
                    let ix0 = x_lo * s + kj - self.pad;
                    for b in 0..batch {
                        let src = &img[(b * self.channels + c) * plane..(b * self.channels + c + 1) * plane];
                        for oy in y_lo..y_hi {
                            let iy = oy * s + ki - self.pad;
                            let src_row = &src[iy * self.img_w..(iy + 1) * self.img_w];
                            let dst = &mut dst_row[b * l + oy * self.col_w + x_lo..b * l + oy * self.col_w + x_hi];
                            if s == 1 {
                                dst.copy_from_slice(&src_row[ix0..ix0 + dst.len()]);
                            } else {
                                for (j, d) in dst.iter_mut().enumerate() {
                                    *d = src_row[ix0 + j * s];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Patches::im2col`]: scatter-adds columns back into an
    /// image buffer.
    fn col2im(&self, batch: usize, cols: &[f32]) -> Vec<f32> {
        let l = self.positions();
        let width = batch * l;
        let plane = self.img_h * self.img_w;
        let s = self.stride;
        let mut img = vec![0.0f32; batch * self.channels * plane];
        for c in 0..self.channels {
            for ki in 0..self.k {
                let (y_lo, y_hi) = self.valid_range(ki, self.img_h, self.col_h);
                for kj in 0..self.k {
                    let (x_lo, x_hi) = self.valid_range(kj, self.img_w, self.col_w);
                    if x_lo >= x_hi {
                        continue;
                    }
                    let r = (c * self.k + ki) * self.k + kj;
                    let src_row = &cols[r * width..(r + 1) * width];
                    let ix0 = x_lo * s + kj - self.pad;
                    for b in 0..batch {
                        let dst = &mut img[(b * self.channels + c) * plane..(b * self.channels + c + 1) * plane];
                        for oy in y_lo..y_hi {
                            let iy = oy * s + ki - self.pad;
                            let dst_row = &mut dst[iy * self.img_w..(iy + 1) * self.img_w];
                            let src = &src_row[b * l + oy * self.col_w + x_lo..b * l + oy * self.col_w + x_hi];
                            if s == 1 {
                                for (d, &v) in dst_row[ix0..ix0 + src.len()].iter_mut().zip(src) {
                                    *d += v;
                                }
                            } else {
                                for (j, &v) in src.iter().enumerate() {
                                    dst_row[ix0 + j * s] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        img
    }
}

/// `(batch, c, l)` -> `(c, batch * l)`
fn batch_to_channel_major(x: &[f32], batch: usize, c: usize, l: usize) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for ch in 0..c {
            out[ch * batch * l + b * l..ch * batch * l + (b + 1) * l].copy_from_slice(&x[(b * c + ch) * l..(b * c + ch + 1) * l]);
        }
    }
    out
}

/// `(c, batch * l)` -> `(batch, c, l)`
fn channel_to_batch_major(x: &[f32], batch: usize, c: usize, l: usize) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        for b in 0..batch {
            out[(b * c + ch) * l..(b * c + ch + 1) * l].copy_from_slice(&x[ch * batch * l + b * l..ch * batch * l + (b + 1) * l]);
        }
    }
    out
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

fn conv_transpose_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size - 1) * stride + k - 2 * pad
}

fn image_dims(shape: &[usize]) -> (usize, usize, usize, usize) {
    assert_eq!(shape.len(), 4, "expected an image tensor, got shape {shape:?}");
    (shape[0], shape[1], shape[2], shape[3])
}

// ---------------------------------------------------------------------------

pub struct Linear {
    in_features: usize,
    out_features: usize,
    weight: Param,
    bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, init: Init, rng: &mut Rng) -> Self {
        Linear {
            in_features,
            out_features,
            weight: Param::new(init.weights(in_features * out_features, in_features, rng)),
            bias: Param::new(init.bias(out_features, in_features, rng)),
            input: None,
        }
    }

    fn apply(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.item_len(), self.in_features, "{}: input has {} features", self.name(), x.item_len());
        let b = x.batch();
        let mut out = Vec::with_capacity(b * self.out_features);
        for _ in 0..b {
            out.extend_from_slice(&self.bias.value);
        }
        gemm(b, self.in_features, self.out_features, &x.data, Op::N, &self.weight.value, Op::T, 1.0, &mut out);
        Tensor::new(vec![b, self.out_features], out)
    }

    fn accumulate(&mut self, grad: &Tensor) -> Tensor {
        let x = self.input.take().expect("Linear::backward without forward");
        gemm(self.out_features, x.batch(), self.in_features, &grad.data, Op::T, &x.data, Op::N, 1.0, &mut self.weight.grad);
        for row in grad.data.chunks_exact(self.out_features) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        x
    }
}

impl Layer for Linear {
    fn name(&self) -> String {
        format!("Linear({}, {})", self.in_features, self.out_features)
    }

    fn output_shape(&self, _input: &[usize]) -> Vec<usize> {
        vec![self.out_features]
    }

    fn forward(&mut self, x: Tensor, _train: bool) -> Tensor {
        let y = self.apply(&x);
        self.input = Some(x);
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        self.apply(x)
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let x = self.accumulate(&grad);
        let b = x.batch();
        let mut dx = vec![0.0; b * self.in_features];
        gemm(b, self.out_features, self.in_features, &grad.data, Op::N, &self.weight.value, Op::N, 0.0, &mut dx);
        Tensor::new(x.shape, dx)
    }

    fn backward_params(&mut self, grad: Tensor) {
        self.accumulate(&grad);
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------

pub struct Conv2d {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    /// `(out_channels, in_channels * k * k)`
    weight: Param,
    bias: Param,
    cache: Option<(Vec<f32>, Patches, Vec<usize>)>,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize, init: Init, rng: &mut Rng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: Param::new(init.weights(out_channels * fan_in, fan_in, rng)),
            bias: Param::new(init.bias(out_channels, fan_in, rng)),
            cache: None,
        }
    }

    fn patches(&self, shape: &[usize]) -> Patches {
        let (_, c, h, w) = image_dims(shape);
        assert_eq!(c, self.in_channels, "{}: input has {c} channels", self.name());
        Patches {
            channels: c,
            img_h: h,
            img_w: w,
            k: self.kernel,
            stride: self.stride,
            pad: self.pad,
            col_h: conv_out(h, self.kernel, self.stride, self.pad),
            col_w: conv_out(w, self.kernel, self.stride, self.pad),
        }
    }

    fn apply(&self, x: &Tensor) -> (Tensor, Vec<f32>, Patches) {
        let p = self.patches(&x.shape);
        let b = x.batch();
        let cols = p.im2col(b, &x.data);
        let l = p.positions();
        let mut y = vec![0.0; self.out_channels * b * l];
        gemm(self.out_channels, p.rows(), b * l, &self.weight.value, Op::N, &cols, Op::N, 0.0, &mut y);
        let mut out = channel_to_batch_major(&y, b, self.out_channels, l);
        for item in out.chunks_exact_mut(self.out_channels * l) {
            for (plane, &bias) in item.chunks_exact_mut(l).zip(&self.bias.value) {
                plane.iter_mut().for_each(|v| *v += bias);
            }
        }
        (Tensor::new(vec![b, self.out_channels, p.col_h, p.col_w], out), cols, p)
    }

    /// Accumulates parameter gradients; returns the channel-major output
    /// gradient for the input pass.
    fn accumulate(&mut self, grad: &Tensor) -> (Vec<f32>, Patches, Vec<usize>) {
        let (cols, p, in_shape) = self.cache.take().expect("Conv2d::backward without forward");
        let b = in_shape[0];
        let l = p.positions();
        let dy = batch_to_channel_major(&grad.data, b, self.out_channels, l);
        gemm(self.out_channels, b * l, p.rows(), &dy, Op::N, &cols, Op::T, 1.0, &mut self.weight.grad);
        for (c, g) in self.bias.grad.iter_mut().enumerate() {
            *g += dy[c * b * l..(c + 1) * b * l].iter().sum::<f32>();
        }
        (dy, p, in_shape)
    }
}

impl Layer for Conv2d {
    fn name(&self) -> String {
        format!(
            "Conv2d({}, {}, kernel={}, stride={}, pad={})",
            self.in_channels, self.out_channels, self.kernel, self.stride, self.pad
        )
    }

    fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        vec![
            self.out_channels,
            conv_out(input[1], self.kernel, self.stride, self.pad),
            conv_out(input[2], self.kernel, self.stride, self.pad),
        ]
    }

    fn forward(&mut self, x: Tensor, _train: bool) -> Tensor {
        let (y, cols, p) = self.apply(&x);
        self.cache = Some((cols, p, x.shape));
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        self.apply(x).0
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let (dy, p, in_shape) = self.accumulate(&grad);
        let b = in_shape[0];
        let l = p.positions();
        let mut dcols = vec![0.0; p.rows() * b * l];
        gemm(p.rows(), self.out_channels, b * l, &self.weight.value, Op::T, &dy, Op::N, 0.0, &mut dcols);
        Tensor::new(in_shape, p.col2im(b, &dcols))
    }

    fn backward_params(&mut self, grad: Tensor) {
        self.accumulate(&grad);
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------

pub struct ConvTranspose2d {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    /// `(in_channels, out_channels * k * k)`
    weight: Param,
    bias: Param,
    cache: Option<(Vec<f32>, Patches, Vec<usize>)>,
}

impl ConvTranspose2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize, init: Init, rng: &mut Rng) -> Self {
        // Same fan-in convention as the usual frameworks: weight dim 1 * k * k.
        let fan_in = out_channels * kernel * kernel;
        ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: Param::new(init.weights(in_channels * fan_in, fan_in, rng)),
            bias: Param::new(init.bias(out_channels, fan_in, rng)),
            cache: None,
        }
    }

    fn patches(&self, shape: &[usize]) -> Patches {
        let (_, c, h, w) = image_dims(shape);
        assert_eq!(c, self.in_channels, "{}: input has {c} channels", self.name());
        Patches {
            channels: self.out_channels,
            img_h: conv_transpose_out(h, self.kernel, self.stride, self.pad),
            img_w: conv_transpose_out(w, self.kernel, self.stride, self.pad),
            k: self.kernel,
            stride: self.stride,
            pad: self.pad,
            col_h: h,
            col_w: w,
        }
    }

    fn apply(&self, x: &Tensor) -> (Tensor, Vec<f32>, Patches) {
        let p = self.patches(&x.shape);
        let b = x.batch();
        let l = p.positions();
        let xm = batch_to_channel_major(&x.data, b, self.in_channels, l);
        let mut cols = vec![0.0; p.rows() * b * l];
        gemm(p.rows(), self.in_channels, b * l, &self.weight.value, Op::T, &xm, Op::N, 0.0, &mut cols);
        let mut out = p.col2im(b, &cols);
        let plane = p.img_h * p.img_w;
        for item in out.chunks_exact_mut(self.out_channels * plane) {
            for (ch, &bias) in item.chunks_exact_mut(plane).zip(&self.bias.value) {
                ch.iter_mut().for_each(|v| *v += bias);
            }
        }
        (Tensor::new(vec![b, self.out_channels, p.img_h, p.img_w], out), xm, p)
    }
}

impl Layer for ConvTranspose2d {
    fn name(&self) -> String {
        format!(
            "ConvTranspose2d({}, {}, kernel={}, stride={}, pad={})",
            self.in_channels, self.out_channels, self.kernel, self.stride, self.pad
        )
    }

    fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        vec![
            self.out_channels,
            conv_transpose_out(input[1], self.kernel, self.stride, self.pad),
            conv_transpose_out(input[2], self.kernel, self.stride, self.pad),
        ]
    }

    fn forward(&mut self, x: Tensor, _train: bool) -> Tensor {
        let (y, xm, p) = self.apply(&x);
        self.cache = Some((xm, p, x.shape));
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        self.apply(x).0
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let (xm, p, in_shape) = self.cache.take().expect("ConvTranspose2d::backward without forward");
        let b = in_shape[0];
        let l = p.positions();
        let plane = p.img_h * p.img_w;
        for item in grad.data.chunks_exact(self.out_channels * plane) {
            for (g, ch) in self.bias.grad.iter_mut().zip(item.chunks_exact(plane)) {
                *g += ch.iter().sum::<f32>();
            }
        }
        let dcols = p.im2col(b, &grad.data);
        gemm(self.in_channels, b * l, p.rows(), &xm, Op::N, &dcols, Op::T, 1.0, &mut self.weight.grad);
        let mut dxm = vec![0.0; self.in_channels * b * l];
        gemm(self.in_channels, p.rows(), b * l, &self.weight.value, Op::N, &dcols, Op::N, 0.0, &mut dxm);
        Tensor::new(in_shape, channel_to_batch_major(&dxm, b, self.in_channels, l))
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------

/// Batch normalisation over the batch (and spatial) axes, per channel.
/// Works on `(batch, features)` and `(batch, channels, h, w)` alike.
pub struct BatchNorm {
    channels: usize,
    momentum: f32,
    eps: f32,
    gamma: Param,
    beta: Param,
    running_mean: Vec<f32>,
    running_var: Vec<f32>,
    cache: Option<BnCache>,
}

struct BnCache {
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
    shape: Vec<usize>,
    /// Batch statistics were used (and must be differentiated through).
    train: bool,
}

/// Per-channel sums of `f(a, b)` over `(batch, channels, l)` buffers.
fn channel_sums(a: &[f32], b: &[f32], channels: usize, l: usize, f: impl Fn(f32, f32) -> f32) -> Vec<f32> {
    let mut acc = vec![0.0f32; channels];
    if l == 1 {
        for (ra, rb) in a.chunks_exact(channels).zip(b.chunks_exact(channels)) {
            for ((s, &x), &y) in acc.iter_mut().zip(ra).zip(rb) {
                *s += f(x, y);
            }
        }
    } else {
        for (i, (pa, pb)) in a.chunks_exact(l).zip(b.chunks_exact(l)).enumerate() {
            acc[i % channels] += pa.iter().zip(pb).map(|(&x, &y)| f(x, y)).sum::<f32>();
        }
    }
    acc
}

/// `out[j] = f(x[j], channel(j))` over a `(batch, channels, l)` buffer.
fn per_channel_map(x: &[f32], out: &mut [f32], channels: usize, l: usize, f: impl Fn(f32, usize) -> f32) {
    if l == 1 {
        for (rx, ro) in x.chunks_exact(channels).zip(out.chunks_exact_mut(channels)) {
            for (c, (o, &v)) in ro.iter_mut().zip(rx).enumerate() {
                *o = f(v, c);
            }
        }
    } else {
        for (i, (px, po)) in x.chunks_exact(l).zip(out.chunks_exact_mut(l)).enumerate() {
            let c = i % channels;
            for (o, &v) in po.iter_mut().zip(px) {
                *o = f(v, c);
            }
        }
    }
}

impl BatchNorm {
    pub fn new(channels: usize, init: Init, rng: &mut Rng) -> Self {
        BatchNorm {
            channels,
            momentum: 0.1,
            eps: 1e-5,
            gamma: Param::new(init.bn_scale(channels, rng)),
            beta: Param::new(vec![0.0; channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            cache: None,
        }
    }

    fn layout(&self, shape: &[usize]) -> (usize, usize) {
        assert_eq!(shape[1], self.channels, "BatchNorm({}): input has {} channels", self.channels, shape[1]);
        (shape[0], shape[2..].iter().product())
    }

    fn normalize(&self, x: &Tensor, mean: &[f32], inv_std: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let (_, l) = self.layout(&x.shape);
        let mut xhat = vec![0.0; x.data.len()];
        per_channel_map(&x.data, &mut xhat, self.channels, l, |v, c| (v - mean[c]) * inv_std[c]);
        let mut y = vec![0.0; x.data.len()];
        let (g, b) = (&self.gamma.value, &self.beta.value);
        per_channel_map(&xhat, &mut y, self.channels, l, |h, c| g[c] * h + b[c]);
        (xhat, y)
    }
}

impl Layer for BatchNorm {
    fn name(&self) -> String {
        format!("BatchNorm({})", self.channels)
    }

    fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        input.to_vec()
    }

    fn forward(&mut self, x: Tensor, train: bool) -> Tensor {
        let (b, l) = self.layout(&x.shape);
        let (mean, inv_std) = if train {
            let m = (b * l) as f32;
            let mean: Vec<f32> = channel_sums(&x.data, &x.data, self.channels, l, |v, _| v).into_iter().map(|s| s / m).collect();
            let mut centered = vec![0.0; x.data.len()];
            per_channel_map(&x.data, &mut centered, self.channels, l, |v, c| v - mean[c]);
            let var: Vec<f32> = channel_sums(&centered, &centered, self.channels, l, |u, v| u * v).into_iter().map(|s| s / m).collect();
            let unbiased = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            let mo = self.momentum;
            for c in 0..self.channels {
                self.running_mean[c] = (1.0 - mo) * self.running_mean[c] + mo * mean[c];
                self.running_var[c] = (1.0 - mo) * self.running_var[c] + mo * var[c] * unbiased;
            }
            let inv: Vec<f32> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
            (mean, inv)
        } else {
            let inv: Vec<f32> = self.running_var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
            (self.running_mean.clone(), inv)
        };
        let (xhat, y) = self.normalize(&x, &mean, &inv_std);
        let shape = x.shape;
        self.cache = Some(BnCache { xhat, inv_std, shape: shape.clone(), train });
        Tensor::new(shape, y)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let inv: Vec<f32> = self.running_var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let (_, y) = self.normalize(x, &self.running_mean, &inv);
        Tensor::new(x.shape.clone(), y)
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let cache = self.cache.take().expect("BatchNorm::backward without forward");
        let (b, l) = self.layout(&cache.shape);
        let m = (b * l) as f32;
        let sum_dy = channel_sums(&grad.data, &grad.data, self.channels, l, |g, _| g);
        let sum_dy_xhat = channel_sums(&grad.data, &cache.xhat, self.channels, l, |g, h| g * h);
        for c in 0..self.channels {
            self.beta.grad[c] += sum_dy[c];
            self.gamma.grad[c] += sum_dy_xhat[c];
        }
        let g = &self.gamma.value;
        let inv = &cache.inv_std;
        let mut dx = vec![0.0; grad.data.len()];
        if cache.train {
            // dx = gamma * inv_std / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
            let mut t = vec![0.0; grad.data.len()];
            per_channel_map(&cache.xhat, &mut t, self.channels, l, |h, c| sum_dy[c] + h * sum_dy_xhat[c]);
            for (tj, &dy) in t.iter_mut().zip(&grad.data) {
                *tj = m * dy - *tj;
            }
            per_channel_map(&t, &mut dx, self.channels, l, |v, c| v * g[c] * inv[c] / m);
        } else {
            per_channel_map(&grad.data, &mut dx, self.channels, l, |dy, c| dy * g[c] * inv[c]);
        }
        Tensor::new(cache.shape, dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Vec<f32>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Vec<f32>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f32),
    Sigmoid,
}

/// Pointwise nonlinearity.
pub struct Pointwise {
    kind: Activation,
    /// Input for ReLU-style activations, output for the sigmoid.
    cache: Option<Tensor>,
}

impl Pointwise {
    pub fn new(kind: Activation) -> Self {
        Pointwise { kind, cache: None }
    }

    fn apply(&self, v: f32) -> f32 {
        match self.kind {
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu(s) => {
                if v > 0.0 {
                    v
                } else {
                    s * v
                }
            }
            Activation::Sigmoid => sigmoid(v),
        }
    }
}

pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Layer for Pointwise {
    fn name(&self) -> String {
        match self.kind {
            Activation::Relu => "ReLU".into(),
            Activation::LeakyRelu(s) => format!("LeakyReLU({s})"),
            Activation::Sigmoid => "Sigmoid".into(),
        }
    }

    fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        input.to_vec()
    }

    fn forward(&mut self, x: Tensor, _train: bool) -> Tensor {
        let y = self.infer(&x);
        self.cache = Some(if self.kind == Activation::Sigmoid { y.clone() } else { x });
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        Tensor::new(x.shape.clone(), x.data.iter().map(|&v| self.apply(v)).collect())
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        let c = self.cache.take().expect("activation backward without forward");
        match self.kind {
            Activation::Relu => grad.data.iter_mut().zip(&c.data).for_each(|(g, &x)| {
                if x <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::LeakyRelu(s) => grad.data.iter_mut().zip(&c.data).for_each(|(g, &x)| {
                if x <= 0.0 {
                    *g *= s
                }
            }),
            Activation::Sigmoid => grad.data.iter_mut().zip(&c.data).for_each(|(g, &y)| *g *= y * (1.0 - y)),
        }
        grad
    }
}

// ---------------------------------------------------------------------------

/// Row-wise log-softmax over `(batch, classes)`.
pub struct LogSoftmax {
    output: Option<Tensor>,
}

impl LogSoftmax {
    pub fn new() -> Self {
        LogSoftmax { output: None }
    }
}

impl Default for LogSoftmax {
    fn default() -> Self {
        Self::new()
    }
}

pub fn log_softmax_rows(data: &[f32], classes: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(classes) {
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f32>().ln();
        out.extend(row.iter().map(|&v| v - lse));
    }
    out
}

impl Layer for LogSoftmax {
    fn name(&self) -> String {
        "LogSoftmax".into()
    }

    fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        input.to_vec()
    }

    fn forward(&mut self, x: Tensor, _train: bool) -> Tensor {
        let y = self.infer(&x);
        self.output = Some(y.clone());
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        Tensor::new(x.shape.clone(), log_softmax_rows(&x.data, x.item_len()))
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        let y = self.output.take().expect("LogSoftmax::backward without forward");
        let k = y.item_len();
        for (g, lp) in grad.data.chunks_exact_mut(k).zip(y.data.chunks_exact(k)) {
            let s: f32 = g.iter().sum();
            for (gi, &l) in g.iter_mut().zip(lp) {
                *gi -= l.exp() * s;
            }
        }
        grad
    }
}

// ---------------------------------------------------------------------------

/// Non-overlapping `size x size` max pooling.
pub struct MaxPool2d {
    size: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(size: usize) -> Self {
        MaxPool2d { size, cache: None }
    }

    fn apply(&self, x: &Tensor) -> (Tensor, Vec<usize>) {
        let (b, c, h, w) = image_dims(&x.shape);
        let (oh, ow) = (h / self.size, w / self.size);
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut arg = Vec::with_capacity(b * c * oh * ow);
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * self.size * w + ox * self.size;
                    for dy in 0..self.size {
                        for dx in 0..self.size {
                            let i = base + (oy * self.size + dy) * w + ox * self.size + dx;
                            if x.data[i] > x.data[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(x.data[best]);
                    arg.push(best);
                }
            }
        }
        (Tensor::new(vec![b, c, oh, ow], out), arg)
    }
}

impl Layer for MaxPool2d {
    fn name(&self) -> String {
        format!("MaxPool2d({})", self.size)
    }

    fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        vec![input[0], input[1] / self.size, input[2] / self.size]
    }

    fn forward(&mut self, x: Tensor, _train: bool) -> Tensor {
        let (y, arg) = self.apply(&x);
        self.cache = Some((arg, x.shape));
        y
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        self.apply(x).0
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let (arg, shape) = self.cache.take().expect("MaxPool2d::backward without forward");
        let mut dx = Tensor::zeros(shape);
        for (&i, &g) in arg.iter().zip(&grad.data) {
            dx.data[i] += g;
        }
        dx
    }
}

// ---------------------------------------------------------------------------

/// Inverted dropout; identity outside training.
pub struct Dropout {
    p: f32,
    rng: Rng,
    mask: Option<Vec<f32>>,
}

impl Dropout {
    pub fn new(p: f32, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout probability must lie in [0, 1)");
        Dropout { p, rng: Rng::seed_from_u64(seed), mask: None }
    }
}

impl Layer for Dropout {
    fn name(&self) -> String {
        format!("Dropout({})", self.p)
    }

    fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        input.to_vec()
    }

    fn forward(&mut self, mut x: Tensor, train: bool) -> Tensor {
        if !train || self.p == 0.0 {
            self.mask = None;
            return x;
        }
        let keep = 1.0 / (1.0 - self.p);
        let mask: Vec<f32> = (0..x.data.len()).map(|_| if self.rng.random::<f32>() < self.p { 0.0 } else { keep }).collect();
        x.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        self.mask = Some(mask);
        x
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        x.clone()
    }

    fn backward(&mut self, mut grad: Tensor) -> Tensor {
        if let Some(mask) = self.mask.take() {
            grad.data.iter_mut().zip(&mask).for_each(|(g, m)| *g *= m);
        }
        grad
    }
}

// ---------------------------------------------------------------------------

/// Reshapes each batch item; `Reshape(vec![n])` flattens.
pub struct Reshape {
    item_shape: Vec<usize>,
    input_shape: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(item_shape: Vec<usize>) -> Self {
        Reshape { item_shape, input_shape: None }
    }

    fn target(&self, batch: usize) -> Vec<usize> {
        let mut s = vec![batch];
        s.extend_from_slice(&self.item_shape);
        s
    }
}

impl Layer for Reshape {
    fn name(&self) -> String {
        if self.item_shape.len() == 1 {
            "Flatten".into()
        } else {
            format!("Reshape({:?})", self.item_shape)
        }
    }

    fn output_shape(&self, _input: &[usize]) -> Vec<usize> {
        self.item_shape.clone()
    }

    fn forward(&mut self, x: Tensor, _train: bool) -> Tensor {
        self.input_shape = Some(x.shape.clone());
        let t = self.target(x.batch());
        x.reshape(t)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        x.clone().reshape(self.target(x.batch()))
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let shape = self.input_shape.take().expect("Reshape::backward without forward");
        grad.reshape(shape)
    }
}
