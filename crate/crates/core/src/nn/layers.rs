use super::gemm::gemm;
use super::{Rng, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d,
    BatchNorm,
    Dense,
    LinearOutput,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Dense => "dense",
            LayerKind::LinearOutput => "linear_output",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "conv2d" => LayerKind::Conv2d,
            "batchnorm" => LayerKind::BatchNorm,
            "dense" => LayerKind::Dense,
            "linear_output" => LayerKind::LinearOutput,
            _ => return None,
        })
    }
}

/// Trainable parameters of one layer. For batch norm `weight` is γ and `bias`
/// is β; the running statistics are only present for that kind.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub kind: LayerKind,
    pub weight: Tensor,
    pub bias: Tensor,
    pub running_mean: Option<Tensor>,
    pub running_var: Option<Tensor>,
    pub frozen: bool,
}

impl LayerParams {
    /// 3×3 convolution, He-uniform weights and zero bias.
    pub fn conv2d(out_channels: usize, in_channels: usize, rng: &mut Rng) -> Self {
        let fan_in = in_channels * 9;
        LayerParams {
            kind: LayerKind::Conv2d,
            weight: he_uniform(&[out_channels, in_channels, 3, 3], fan_in, rng),
            bias: Tensor::zeros(&[out_channels]),
            running_mean: None,
            running_var: None,
            frozen: false,
        }
    }

    pub fn batchnorm(channels: usize) -> Self {
        LayerParams {
            kind: LayerKind::BatchNorm,
            weight: Tensor::full(&[channels], 1.0),
            bias: Tensor::zeros(&[channels]),
            running_mean: Some(Tensor::zeros(&[channels])),
            running_var: Some(Tensor::full(&[channels], 1.0)),
            frozen: false,
        }
    }

    /// Fully connected layer; `kind` is `Dense` or `LinearOutput`.
    pub fn dense(kind: LayerKind, out_dim: usize, in_dim: usize, rng: &mut Rng) -> Self {
        debug_assert!(matches!(kind, LayerKind::Dense | LayerKind::LinearOutput));
        LayerParams {
            kind,
            weight: he_uniform(&[out_dim, in_dim], in_dim, rng),
            bias: Tensor::zeros(&[out_dim]),
            running_mean: None,
            running_var: None,
            frozen: false,
        }
    }

    /// Parameter count including batch-norm running statistics.
    pub fn num_values(&self) -> usize {
        self.weight.len()
            + self.bias.len()
            + self.running_mean.as_ref().map_or(0, Tensor::len)
            + self.running_var.as_ref().map_or(0, Tensor::len)
    }
}

fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(-limit, limit)).collect();
    Tensor::from_raw(shape.to_vec(), data)
}

fn dims4(x: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        ref s => Err(Error::Shape(format!("{what} expects a rank-4 input, got {s:?}"))),
    }
}

// ---------------------------------------------------------------- conv2d

#[derive(Clone, Debug)]
pub struct Conv2dCache {
    in_shape: [usize; 4],
    /// im2col matrix, `(C_in·9) × (N·H·W)`.
    cols: Vec<f64>,
}

fn im2col(x: &[f64], n: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let ncols = n * hw;
    let mut cols = vec![0.0; c * 9 * ncols];
    for ci in 0..c {
        for di in 0..3 {
            for dj in 0..3 {
                let row = &mut cols[(ci * 9 + di * 3 + dj) * ncols..][..ncols];
                for ni in 0..n {
                    let src = &x[(ni * c + ci) * hw..][..hw];
                    let dst = &mut row[ni * hw..][..hw];
                    for i in 0..h {
                        let si = i + di;
                        if si < 1 || si > h {
                            continue;
                        }
                        let si = si - 1;
                        for j in 0..w {
                            let sj = j + dj;
                            if sj < 1 || sj > w {
                                continue;
                            }
                            dst[i * w + j] = src[si * w + sj - 1];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], n: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let ncols = n * hw;
    let mut x = vec![0.0; n * c * hw];
    for ci in 0..c {
        for di in 0..3 {
            for dj in 0..3 {
                let row = &cols[(ci * 9 + di * 3 + dj) * ncols..][..ncols];
                for ni in 0..n {
                    let src = &row[ni * hw..][..hw];
                    let dst = &mut x[(ni * c + ci) * hw..][..hw];
                    for i in 0..h {
                        let si = i + di;
                        if si < 1 || si > h {
                            continue;
                        }
                        let si = si - 1;
                        for j in 0..w {
                            let sj = j + dj;
                            if sj < 1 || sj > w {
                                continue;
                            }
                            dst[si * w + sj - 1] += src[i * w + j];
                        }
                    }
                }
            }
        }
    }
    x
}

/// 3×3 convolution, stride 1, zero "same" padding.
pub fn conv2d_forward(input: &Tensor, params: &LayerParams) -> Result<(Tensor, Conv2dCache)> {
    let (n, c, h, w) = dims4(input, "conv2d")?;
    let (o, kc) = match *params.weight.shape() {
        [o, kc, 3, 3] => (o, kc),
        ref s => return Err(Error::Shape(format!("conv2d kernel must be O×C×3×3, got {s:?}"))),
    };
    if kc != c {
        return Err(Error::Shape(format!("conv2d: input has {c} channels, kernel expects {kc}")));
    }
    let hw = h * w;
    let ncols = n * hw;
    let cols = im2col(input.data(), n, c, h, w);
    let mut y = vec![0.0; o * ncols];
    gemm(o, c * 9, ncols, params.weight.data(), (c * 9, 1), &cols, (ncols, 1), 0.0, &mut y, (ncols, 1));
    let bias = params.bias.data();
    let mut out = vec![0.0; n * o * hw];
    for oi in 0..o {
        for ni in 0..n {
            let src = &y[oi * ncols + ni * hw..][..hw];
            let dst = &mut out[(ni * o + oi) * hw..][..hw];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + bias[oi];
            }
        }
    }
    Ok((Tensor::from_raw(vec![n, o, h, w], out), Conv2dCache { in_shape: [n, c, h, w], cols }))
}

/// Returns `(d_input, d_weight, d_bias)`. Parameter gradients are skipped
/// (returned as `None`) when `param_grads` is false.
pub fn conv2d_backward(
    grad_out: &Tensor,
    params: &LayerParams,
    cache: &Conv2dCache,
    param_grads: bool,
) -> Result<(Tensor, Option<(Tensor, Tensor)>)> {
    let [n, c, h, w] = cache.in_shape;
    let o = params.weight.shape()[0];
    if grad_out.shape() != [n, o, h, w] {
        return Err(Error::Shape(format!("conv2d backward: grad {:?}", grad_out.shape())));
    }
    let hw = h * w;
    let ncols = n * hw;
    let mut dy = vec![0.0; o * ncols];
    let g = grad_out.data();
    for ni in 0..n {
        for oi in 0..o {
            dy[oi * ncols + ni * hw..][..hw].copy_from_slice(&g[(ni * o + oi) * hw..][..hw]);
        }
    }
    let pgrads = if param_grads {
        let mut dw = vec![0.0; o * c * 9];
        gemm(o, ncols, c * 9, &dy, (ncols, 1), &cache.cols, (1, ncols), 0.0, &mut dw, (c * 9, 1));
        let db: Vec<f64> = (0..o).map(|oi| dy[oi * ncols..][..ncols].iter().sum()).collect();
        Some((Tensor::from_raw(vec![o, c, 3, 3], dw), Tensor::from_raw(vec![o], db)))
    } else {
        None
    };
    let mut dcols = vec![0.0; c * 9 * ncols];
    gemm(c * 9, o, ncols, params.weight.data(), (1, c * 9), &dy, (ncols, 1), 0.0, &mut dcols, (ncols, 1));
    let dx = col2im(&dcols, n, c, h, w);
    Ok((Tensor::from_raw(vec![n, c, h, w], dx), pgrads))
}

// ---------------------------------------------------------------- maxpool

#[derive(Clone, Debug)]
pub struct MaxPoolCache {
    in_shape: [usize; 4],
    /// Flat input index of the maximum for each output cell.
    argmax: Vec<usize>,
}

/// Non-overlapping max pooling (stride = window), floor mode.
pub fn maxpool2d_forward(input: &Tensor, pool_h: usize, pool_w: usize) -> Result<(Tensor, MaxPoolCache)> {
    let (n, c, h, w) = dims4(input, "maxpool2d")?;
    if pool_h == 0 || pool_w == 0 {
        return Err(Error::Shape("pool size must be at least 1".into()));
    }
    if pool_h > h || pool_w > w {
        return Err(Error::Shape(format!("pool ({pool_h},{pool_w}) exceeds input ({h},{w})")));
    }
    let (oh, ow) = (h / pool_h, w / pool_w);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + i * pool_h * w + j * pool_w;
                for di in 0..pool_h {
                    for dj in 0..pool_w {
                        let idx = base + (i * pool_h + di) * w + j * pool_w + dj;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_raw(vec![n, c, oh, ow], out), MaxPoolCache { in_shape: [n, c, h, w], argmax }))
}

pub fn maxpool2d_backward(grad_out: &Tensor, cache: &MaxPoolCache) -> Tensor {
    let mut dx = vec![0.0; cache.in_shape.iter().product()];
    for (g, &idx) in grad_out.data().iter().zip(&cache.argmax) {
        dx[idx] += g;
    }
    Tensor::from_raw(cache.in_shape.to_vec(), dx)
}

// ---------------------------------------------------------------- batchnorm

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    /// Normalised input x̂.
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Per-channel batch mean and biased variance (training mode only).
    pub(crate) batch_mean: Option<Vec<f64>>,
    pub(crate) batch_var: Option<Vec<f64>>,
    /// Number of values per channel in the batch.
    pub(crate) count: usize,
}

fn bn_layout(x: &Tensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [n, c] => Ok((n, c, 1)),
        [n, c, h, w] => Ok((n, c, h * w)),
        ref s => Err(Error::Shape(format!("batchnorm expects rank 2 or 4, got {s:?}"))),
    }
}

/// Per-channel batch normalisation. Training mode normalises with the batch
/// statistics over `(N, H, W)`; inference mode with the running statistics.
/// Running statistics are not modified here.
pub fn batchnorm_forward(input: &Tensor, params: &LayerParams, training: bool) -> Result<(Tensor, BatchNormCache)> {
    let (n, c, plane) = bn_layout(input)?;
    if n == 0 {
        return Err(Error::Shape("batchnorm on an empty batch".into()));
    }
    if params.weight.len() != c {
        return Err(Error::Shape(format!("batchnorm has {} channels, input {c}", params.weight.len())));
    }
    let x = input.data();
    let count = n * plane;
    let (mean, var) = if training {
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ci in 0..c {
            let mut s = 0.0;
            for ni in 0..n {
                s += x[(ni * c + ci) * plane..][..plane].iter().sum::<f64>();
            }
            let m = s / count as f64;
            let mut v = 0.0;
            for ni in 0..n {
                v += x[(ni * c + ci) * plane..][..plane].iter().map(|a| (a - m) * (a - m)).sum::<f64>();
            }
            mean[ci] = m;
            var[ci] = v / count as f64;
        }
        (mean, var)
    } else {
        let rm = params.running_mean.as_ref().ok_or_else(|| Error::State("batchnorm without running mean".into()))?;
        let rv = params.running_var.as_ref().ok_or_else(|| Error::State("batchnorm without running var".into()))?;
        (rm.data().to_vec(), rv.data().to_vec())
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let gamma = params.weight.data();
    let beta = params.bias.data();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            for k in off..off + plane {
                let xh = (x[k] - mean[ci]) * inv_std[ci];
                xhat[k] = xh;
                out[k] = gamma[ci] * xh + beta[ci];
            }
        }
    }
    let cache = BatchNormCache {
        xhat,
        inv_std,
        batch_mean: training.then(|| mean),
        batch_var: training.then(|| var),
        count,
    };
    Ok((Tensor::from_raw(input.shape().to_vec(), out), cache))
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub fn batchnorm_backward(grad_out: &Tensor, params: &LayerParams, cache: &BatchNormCache) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, c, plane) = bn_layout(grad_out)?;
    let g = grad_out.data();
    let gamma = params.weight.data();
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            for k in off..off + plane {
                dgamma[ci] += g[k] * cache.xhat[k];
                dbeta[ci] += g[k];
            }
        }
    }
    let mut dx = vec![0.0; g.len()];
    let training = cache.batch_mean.is_some();
    let m = cache.count as f64;
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * plane;
            let scale = gamma[ci] * cache.inv_std[ci];
            for k in off..off + plane {
                dx[k] = if training {
                    // d x = γ/σ · (dy − mean(dy) − x̂ · mean(dy · x̂))
                    scale * (g[k] - dbeta[ci] / m - cache.xhat[k] * dgamma[ci] / m)
                } else {
                    scale * g[k]
                };
            }
        }
    }
    let shape = grad_out.shape().to_vec();
    Ok((Tensor::from_raw(shape, dx), Tensor::from_raw(vec![c], dgamma), Tensor::from_raw(vec![c], dbeta)))
}

// ---------------------------------------------------------------- dense

/// `out = input · Wᵀ + b` with `W` of shape `(D_out, D_in)`.
pub fn dense_forward(input: &Tensor, params: &LayerParams) -> Result<Tensor> {
    let (n, din) = match *input.shape() {
        [n, d] => (n, d),
        ref s => return Err(Error::Shape(format!("dense expects (N, D), got {s:?}"))),
    };
    let (dout, wdin) = (params.weight.shape()[0], params.weight.shape()[1]);
    if wdin != din {
        return Err(Error::Shape(format!("dense: input width {din}, weight expects {wdin}")));
    }
    let mut out = vec![0.0; n * dout];
    for row in out.chunks_mut(dout) {
        row.copy_from_slice(params.bias.data());
    }
    gemm(n, din, dout, input.data(), (din, 1), params.weight.data(), (1, din), 1.0, &mut out, (dout, 1));
    Ok(Tensor::from_raw(vec![n, dout], out))
}

/// Returns `(d_input, Some((d_weight, d_bias)))`.
pub fn dense_backward(
    grad_out: &Tensor,
    input: &Tensor,
    params: &LayerParams,
    param_grads: bool,
) -> Result<(Tensor, Option<(Tensor, Tensor)>)> {
    let (n, din) = (input.shape()[0], input.shape()[1]);
    let dout = params.weight.shape()[0];
    if grad_out.shape() != [n, dout] {
        return Err(Error::Shape(format!("dense backward: grad {:?}", grad_out.shape())));
    }
    let mut dx = vec![0.0; n * din];
    gemm(n, dout, din, grad_out.data(), (dout, 1), params.weight.data(), (din, 1), 0.0, &mut dx, (din, 1));
    let pgrads = if param_grads {
        let mut dw = vec![0.0; dout * din];
        gemm(dout, n, din, grad_out.data(), (1, dout), input.data(), (din, 1), 0.0, &mut dw, (din, 1));
        let mut db = vec![0.0; dout];
        for row in grad_out.data().chunks(dout) {
            db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
        }
        Some((Tensor::from_raw(vec![dout, din], dw), Tensor::from_raw(vec![dout], db)))
    } else {
        None
    };
    Ok((Tensor::from_raw(vec![n, din], dx), pgrads))
}

// ---------------------------------------------------------------- relu / dropout

pub fn relu_forward(input: &Tensor) -> (Tensor, Vec<bool>) {
    let mask: Vec<bool> = input.data().iter().map(|&v| v > 0.0).collect();
    let out = input.data().iter().map(|&v| v.max(0.0)).collect();
    (Tensor::from_raw(input.shape().to_vec(), out), mask)
}

pub fn relu_backward(grad_out: &Tensor, mask: &[bool]) -> Tensor {
    let dx = grad_out.data().iter().zip(mask).map(|(&g, &m)| if m { g } else { 0.0 }).collect();
    Tensor::from_raw(grad_out.shape().to_vec(), dx)
}

/// Inverted dropout. Returns the output and, in training mode, the per-element
/// multiplier (0 or `1/(1-p)`) needed by the backward pass.
pub fn dropout_forward(input: &Tensor, p: f64, training: bool, rng: &mut Rng) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Param(format!("dropout probability must be in [0, 1), got {p}")));
    }
    if !training || p == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..input.len()).map(|_| if rng.uniform() < p { 0.0 } else { keep }).collect();
    let out = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor::from_raw(input.shape().to_vec(), out), Some(mask)))
}
