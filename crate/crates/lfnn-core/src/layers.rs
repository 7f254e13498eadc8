//! Dense and convolutional layers with closed-form forward passes and
//! layer-local gradient routines.
//!
//! The local-gradient functions treat the recorded layer input as a constant:
//! they produce parameter gradients only, never a gradient with respect to
//! the input. [`dense_backprop_grad`] is the one chain-rule hook, used only
//! when a global loss is backpropagated.

use crate::error::{Error, Result};
use crate::parallel::for_each_chunk_mut;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{
    add_bias_rows, init_glorot, matmul, matmul_nt, matmul_tn, sigmoid_scalar, softmax_into,
    Tensor,
};

/// Activation applied to a dense layer's pre-activation output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    /// Softmax over each contiguous group of `width` units, so every worker's
    /// slice of the layer output is its own probability vector.
    SoftmaxPerWorker { width: usize },
}

impl Activation {
    pub fn apply<S: Scalar>(&self, pre: &Tensor<S>) -> Tensor<S> {
        match *self {
            Activation::Identity => pre.clone(),
            Activation::Sigmoid => pre.map(sigmoid_scalar),
            Activation::SoftmaxPerWorker { width } => {
                let (_, cols) = pre.as_rows();
                debug_assert_eq!(cols % width, 0);
                let mut out = Tensor::zeros(pre.shape());
                let src = pre.data();
                for (orow, irow) in out.data_mut().chunks_mut(width).zip(src.chunks(width)) {
                    softmax_into(orow, irow);
                }
                out
            }
        }
    }

    /// Chain `d_post` (gradient w.r.t. the activation output) back to the
    /// pre-activation. `post` must be the recorded activation output.
    pub fn backward<S: Scalar>(&self, post: &Tensor<S>, d_post: &Tensor<S>) -> Tensor<S> {
        match *self {
            Activation::Identity => d_post.clone(),
            Activation::Sigmoid => {
                let mut out = Tensor::zeros(d_post.shape());
                for ((o, &p), &d) in out
                    .data_mut()
                    .iter_mut()
                    .zip(post.data())
                    .zip(d_post.data())
                {
                    *o = d * p * (S::one() - p);
                }
                out
            }
            Activation::SoftmaxPerWorker { width } => {
                let mut out = Tensor::zeros(d_post.shape());
                for ((oslice, pslice), dslice) in out
                    .data_mut()
                    .chunks_mut(width)
                    .zip(post.data().chunks(width))
                    .zip(d_post.data().chunks(width))
                {
                    let mut dot = S::zero();
                    for (&p, &d) in pslice.iter().zip(dslice) {
                        dot = dot + p * d;
                    }
                    for ((o, &p), &d) in oslice.iter_mut().zip(pslice).zip(dslice) {
                        *o = p * (d - dot);
                    }
                }
                out
            }
        }
    }
}

/// Parameter gradients for one layer, shaped exactly like the parameters.
#[derive(Clone, Debug)]
pub struct LayerGrads<S> {
    pub d_weights: Tensor<S>,
    pub d_bias: Tensor<S>,
    pub layer_index: usize,
}

impl<S: Scalar> LayerGrads<S> {
    pub fn with_index(mut self, layer_index: usize) -> Self {
        self.layer_index = layer_index;
        self
    }
}

/// Fully connected layer; weights are `[out_units, in_units]`.
#[derive(Clone, Debug)]
pub struct DenseLayer<S> {
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
    pub activation: Activation,
}

impl<S: Scalar> DenseLayer<S> {
    pub fn new(in_units: usize, out_units: usize, activation: Activation, rng: &mut Rng) -> Self {
        Self {
            weights: init_glorot(rng, in_units, out_units, &[out_units, in_units]),
            bias: Tensor::zeros(&[out_units]),
            activation,
        }
    }

    pub fn in_units(&self) -> usize {
        self.weights.dim(1)
    }

    pub fn out_units(&self) -> usize {
        self.weights.dim(0)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// `x · Wᵀ + b` without the activation.
    pub fn preactivation(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        if x.rank() != 2 || x.dim(1) != self.in_units() {
            return Err(Error::ShapeMismatch {
                op: "dense_forward",
                left: x.shape().to_vec(),
                right: self.weights.shape().to_vec(),
            });
        }
        let mut pre = matmul_nt(x, &self.weights)?;
        add_bias_rows(&mut pre, &self.bias)?;
        Ok(pre)
    }
}

/// Forward pass: `activation(x · Wᵀ + b)` for a `[batch, in]` input.
pub fn dense_forward<S: Scalar>(layer: &DenseLayer<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    let pre = layer.preactivation(x)?;
    Ok(layer.activation.apply(&pre))
}

fn check_dense_grad_shapes<S: Scalar>(
    op: &'static str,
    layer: &DenseLayer<S>,
    x: &Tensor<S>,
    d_pre: &Tensor<S>,
) -> Result<usize> {
    if x.rank() != 2 || x.dim(1) != layer.in_units() {
        return Err(Error::ShapeMismatch {
            op,
            left: x.shape().to_vec(),
            right: layer.weights.shape().to_vec(),
        });
    }
    if d_pre.rank() != 2 || d_pre.dim(0) != x.dim(0) || d_pre.dim(1) != layer.out_units() {
        return Err(Error::ShapeMismatch {
            op,
            left: d_pre.shape().to_vec(),
            right: vec![x.dim(0), layer.out_units()],
        });
    }
    Ok(x.dim(0))
}

/// Local parameter gradients from per-example pre-activation gradients.
///
/// `d_pre` carries one row per example, scaled so that dividing by the batch
/// size here yields the gradient of the batch-mean loss:
/// `d_weights = d_preᵀ · x / batch`, `d_bias = column-mean of d_pre`.
/// No gradient with respect to `x` is produced.
pub fn dense_local_grad<S: Scalar>(
    layer: &DenseLayer<S>,
    x: &Tensor<S>,
    d_pre: &Tensor<S>,
) -> Result<LayerGrads<S>> {
    let batch = check_dense_grad_shapes("dense_local_grad", layer, x, d_pre)?;
    let inv_b = S::one() / S::from_f64(batch as f64);
    let mut d_weights = matmul_tn(d_pre, x)?;
    for w in d_weights.data_mut() {
        *w = *w * inv_b;
    }
    let out_units = layer.out_units();
    let mut d_bias = Tensor::zeros(&[out_units]);
    {
        let db = d_bias.data_mut();
        for row in d_pre.data().chunks(out_units) {
            for (o, &d) in db.iter_mut().zip(row) {
                *o = *o + d;
            }
        }
        for o in db.iter_mut() {
            *o = *o * inv_b;
        }
    }
    Ok(LayerGrads {
        d_weights,
        d_bias,
        layer_index: 0,
    })
}

/// As [`dense_local_grad`] plus the input gradient `d_in = d_pre · W` for
/// chaining a backpropagated global loss upstream.
pub fn dense_backprop_grad<S: Scalar>(
    layer: &DenseLayer<S>,
    x: &Tensor<S>,
    d_pre: &Tensor<S>,
) -> Result<(LayerGrads<S>, Tensor<S>)> {
    check_dense_grad_shapes("dense_backprop_grad", layer, x, d_pre)?;
    let grads = dense_local_grad(layer, x, d_pre)?;
    let d_in = matmul(d_pre, &layer.weights)?;
    Ok((grads, d_in))
}

/// Convolutional layer; filters are `[num_filters, in_channels, kh, kw]`.
#[derive(Clone, Debug)]
pub struct ConvLayer<S> {
    pub filters: Tensor<S>,
    pub bias: Tensor<S>,
    pub stride: usize,
    pub padding: usize,
}

impl<S: Scalar> ConvLayer<S> {
    pub fn new(
        in_channels: usize,
        num_filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = num_filters * kernel * kernel;
        Self {
            filters: init_glorot(
                rng,
                fan_in,
                fan_out,
                &[num_filters, in_channels, kernel, kernel],
            ),
            bias: Tensor::zeros(&[num_filters]),
            stride: stride.max(1),
            padding,
        }
    }

    pub fn num_filters(&self) -> usize {
        self.filters.dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.filters.dim(1)
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.filters.dim(2), self.filters.dim(3))
    }

    pub fn param_count(&self) -> usize {
        self.filters.len() + self.bias.len()
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel();
        if h + 2 * self.padding < kh || w + 2 * self.padding < kw {
            return Err(Error::InvalidShape {
                op: "conv_forward",
                shape: vec![h, w],
                reason: format!("kernel {kh}x{kw} larger than padded input"),
            });
        }
        Ok((
            (h + 2 * self.padding - kh) / self.stride + 1,
            (w + 2 * self.padding - kw) / self.stride + 1,
        ))
    }
}

fn check_conv_input<S: Scalar>(
    op: &'static str,
    layer: &ConvLayer<S>,
    x: &Tensor<S>,
) -> Result<(usize, usize, usize)> {
    if x.rank() != 4 || x.dim(1) != layer.in_channels() {
        return Err(Error::ShapeMismatch {
            op,
            left: x.shape().to_vec(),
            right: layer.filters.shape().to_vec(),
        });
    }
    Ok((x.dim(0), x.dim(2), x.dim(3)))
}

/// Standard cross-correlation plus bias: `[B,C,H,W] -> [B,F,H',W']`.
pub fn conv_forward<S: Scalar>(layer: &ConvLayer<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    let (batch, h, w) = check_conv_input("conv_forward", layer, x)?;
    let (oh, ow) = layer.out_hw(h, w)?;
    let f = layer.num_filters();
    let c = layer.in_channels();
    let (kh, kw) = layer.kernel();
    let stride = layer.stride;
    let pad = layer.padding as isize;

    let mut out = Tensor::zeros(&[batch, f, oh, ow]);
    let xv = x.data();
    let fv = layer.filters.data();
    let bv = layer.bias.data();
    let plane = oh * ow;
    let tasks_min = (MIN_CONV_FLOPS / (plane * c * kh * kw).max(1)).max(1);
    for_each_chunk_mut(out.data_mut(), plane, tasks_min, |bf, oplane| {
        let b = bf / f;
        let fi = bf % f;
        let xbase = b * c * h * w;
        let fbase = fi * c * kh * kw;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bv[fi];
                for ci in 0..c {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        // valid kx range so that 0 <= ix < w
                        let off = (ox * stride) as isize - pad;
                        let kx_lo = (-off).max(0) as usize;
                        let kx_hi = ((w as isize - off).min(kw as isize)).max(0) as usize;
                        if kx_lo >= kx_hi {
                            continue;
                        }
                        let xrow = xbase + ci * h * w + iy as usize * w;
                        let frow = fbase + ci * kh * kw + ky * kw;
                        let ix0 = (off + kx_lo as isize) as usize;
                        let xs = &xv[xrow + ix0..xrow + ix0 + (kx_hi - kx_lo)];
                        let fs = &fv[frow + kx_lo..frow + kx_hi];
                        for (&xx, &ff) in xs.iter().zip(fs) {
                            acc = acc + xx * ff;
                        }
                    }
                }
                oplane[oy * ow + ox] = acc;
            }
        }
    });
    Ok(out)
}

const MIN_CONV_FLOPS: usize = 16 * 1024;

/// Local parameter gradients for a conv layer: correlate the recorded input
/// with the per-example output gradients, averaged over the batch only.
pub fn conv_local_grad<S: Scalar>(
    layer: &ConvLayer<S>,
    x: &Tensor<S>,
    d_out: &Tensor<S>,
) -> Result<LayerGrads<S>> {
    let (batch, h, w) = check_conv_input("conv_local_grad", layer, x)?;
    let (oh, ow) = layer.out_hw(h, w)?;
    let f = layer.num_filters();
    let c = layer.in_channels();
    let (kh, kw) = layer.kernel();
    if d_out.shape() != [batch, f, oh, ow] {
        return Err(Error::ShapeMismatch {
            op: "conv_local_grad",
            left: d_out.shape().to_vec(),
            right: vec![batch, f, oh, ow],
        });
    }
    let stride = layer.stride;
    let pad = layer.padding as isize;
    let inv_b = S::one() / S::from_f64(batch as f64);

    let mut d_filters = Tensor::zeros(&[f, c, kh, kw]);
    let mut d_bias = Tensor::zeros(&[f]);
    let xv = x.data();
    let dv = d_out.data();
    let fsize = c * kh * kw;
    let plane = oh * ow;
    let tasks_min = (MIN_CONV_FLOPS / (batch * plane * kh * kw).max(1)).max(1);
    for_each_chunk_mut(d_filters.data_mut(), fsize, tasks_min, |fi, df| {
        for b in 0..batch {
            let dplane = &dv[(b * f + fi) * plane..(b * f + fi + 1) * plane];
            let xbase = b * c * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = dplane[oy * ow + ox];
                    if g == S::zero() {
                        continue;
                    }
                    for ci in 0..c {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let off = (ox * stride) as isize - pad;
                            let kx_lo = (-off).max(0) as usize;
                            let kx_hi = ((w as isize - off).min(kw as isize)).max(0) as usize;
                            if kx_lo >= kx_hi {
                                continue;
                            }
                            let xrow = xbase + ci * h * w + iy as usize * w;
                            let ix0 = (off + kx_lo as isize) as usize;
                            let xs = &xv[xrow + ix0..xrow + ix0 + (kx_hi - kx_lo)];
                            let fr = &mut df[ci * kh * kw + ky * kw + kx_lo
                                ..ci * kh * kw + ky * kw + kx_hi];
                            for (o, &xx) in fr.iter_mut().zip(xs) {
                                *o = *o + g * xx;
                            }
                        }
                    }
                }
            }
        }
        for o in df.iter_mut() {
            *o = *o * inv_b;
        }
    });
    {
        let db = d_bias.data_mut();
        for b in 0..batch {
            for (fi, o) in db.iter_mut().enumerate() {
                let dplane = &dv[(b * f + fi) * plane..(b * f + fi + 1) * plane];
                let mut acc = S::zero();
                for &g in dplane {
                    acc = acc + g;
                }
                *o = *o + acc;
            }
        }
        for o in db.iter_mut() {
            *o = *o * inv_b;
        }
    }
    Ok(LayerGrads {
        d_weights: d_filters,
        d_bias,
        layer_index: 0,
    })
}

/// Per-channel spatial mean: `[B,F,H,W] -> [B,F]`.
pub fn global_avg_pool<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    if x.rank() != 4 || x.dim(2) == 0 || x.dim(3) == 0 {
        return Err(Error::InvalidShape {
            op: "global_avg_pool",
            shape: x.shape().to_vec(),
            reason: "expected [batch, channels, h>=1, w>=1]".into(),
        });
    }
    let (b, f, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let plane = h * w;
    let inv = S::one() / S::from_f64(plane as f64);
    let mut out = Tensor::zeros(&[b, f]);
    for (o, xplane) in out.data_mut().iter_mut().zip(x.data().chunks(plane)) {
        let mut acc = S::zero();
        for &v in xplane {
            acc = acc + v;
        }
        *o = acc * inv;
    }
    Ok(out)
}
