//! Tensor operations: forward kernels plus recorded backward closures.

use std::collections::HashMap;

use super::kernels;
use super::{stage_grad, SeededRng, Tensor};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f32 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu(f32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Hadamard,
}

/// Recorded operation that produced a tensor. Holds the parent tensors, which
/// keeps the upstream graph alive until the result is dropped.
pub enum Op {
    Leaf,
    Conv2d {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        pad: usize,
    },
    Dense {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
    },
    Activation {
        input: Tensor,
        kind: Activation,
    },
    PixelShuffle {
        input: Tensor,
        r: usize,
    },
    PixelUnshuffle {
        input: Tensor,
        r: usize,
    },
    MaxPool2 {
        input: Tensor,
        argmax: Vec<u32>,
    },
    GlobalAvgPool {
        input: Tensor,
    },
    ConcatChannels {
        a: Tensor,
        b: Tensor,
    },
    SliceChannels {
        input: Tensor,
        from: usize,
    },
    Binary {
        a: Tensor,
        b: Tensor,
        kind: ElementwiseKind,
    },
    Dropout {
        input: Tensor,
        mask: Vec<f32>,
    },
    Reshape {
        input: Tensor,
    },
    MaeLoss {
        p: Tensor,
        q: Tensor,
    },
    MseLoss {
        p: Tensor,
        q: Tensor,
    },
    DLoss {
        d_hr: Tensor,
        d_sr: Tensor,
        smooth: f32,
    },
    GAdvLoss {
        d_sr: Tensor,
        non_saturating: bool,
    },
    WeightedSum {
        terms: Vec<(f32, Tensor)>,
    },
    MeanAll {
        input: Tensor,
    },
    SumAll {
        input: Tensor,
    },
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<Tensor> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            } => vec![input.clone(), weight.clone(), bias.clone()],
            Op::Dense {
                input,
                weight,
                bias,
            } => vec![input.clone(), weight.clone(), bias.clone()],
            Op::Activation { input, .. }
            | Op::PixelShuffle { input, .. }
            | Op::PixelUnshuffle { input, .. }
            | Op::MaxPool2 { input, .. }
            | Op::GlobalAvgPool { input }
            | Op::SliceChannels { input, .. }
            | Op::Dropout { input, .. }
            | Op::Reshape { input }
            | Op::MeanAll { input }
            | Op::SumAll { input } => vec![input.clone()],
            Op::ConcatChannels { a, b } | Op::Binary { a, b, .. } => vec![a.clone(), b.clone()],
            Op::MaeLoss { p, q } | Op::MseLoss { p, q } => vec![p.clone(), q.clone()],
            Op::DLoss { d_hr, d_sr, .. } => vec![d_hr.clone(), d_sr.clone()],
            Op::GAdvLoss { d_sr, .. } => vec![d_sr.clone()],
            Op::WeightedSum { terms } => terms.iter().map(|(_, t)| t.clone()).collect(),
        }
    }

    pub(crate) fn backward(
        &self,
        node: &Tensor,
        g: &[f32],
        grads: &mut HashMap<u64, Vec<f32>>,
    ) -> Result<()> {
        match self {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                let (n, cin, h, w) = input.dims4()?;
                let (cout, _, kh, kw) = weight.dims4()?;
                let (_, _, ho, wo) = node.dims4()?;
                let din = kernels::conv2d_backward_input(
                    g, n, cin, h, w,
                    weight.data(),
                    cout, kh, kw, *stride, *pad, ho, wo,
                );
                let dw = kernels::conv2d_backward_weight(
                    input.data(),
                    g, n, cin, h, w, cout, kh, kw, *stride, *pad, ho, wo,
                );
                let db = kernels::conv2d_backward_bias(g, n, cout, ho * wo);
                stage_grad(grads, input, din);
                stage_grad(grads, weight, dw);
                stage_grad(grads, bias, db);
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let (n, f) = input.dims2()?;
                let (gdim, _) = weight.dims2()?;
                let (din, dw, db) =
                    kernels::dense_backward(input.data(), g, n, f, weight.data(), gdim);
                stage_grad(grads, input, din);
                stage_grad(grads, weight, dw);
                stage_grad(grads, bias, db);
            }
            Op::Activation { input, kind } => {
                let y = node.data();
                let x = input.data();
                let din: Vec<f32> = match kind {
                    Activation::Sigmoid => y
                        .iter()
                        .zip(g)
                        .map(|(yv, gv)| gv * yv * (1.0 - yv))
                        .collect(),
                    Activation::Tanh => y
                        .iter()
                        .zip(g)
                        .map(|(yv, gv)| gv * (1.0 - yv * yv))
                        .collect(),
                    Activation::Relu => x
                        .iter()
                        .zip(g)
                        .map(|(xv, gv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect(),
                    Activation::LeakyRelu(slope) => x
                        .iter()
                        .zip(g)
                        .map(|(xv, gv)| if *xv > 0.0 { *gv } else { gv * slope })
                        .collect(),
                };
                stage_grad(grads, input, din);
            }
            Op::PixelShuffle { input, r } => {
                let (n, cout, ho, wo) = node.dims4()?;
                // Inverse rearrangement of the output gradient.
                let din = kernels::pixel_unshuffle_forward(g, n, cout, ho, wo, *r);
                stage_grad(grads, input, din);
            }
            Op::PixelUnshuffle { input, r } => {
                let (n, cout, ho, wo) = node.dims4()?;
                let din = kernels::pixel_shuffle_forward(g, n, cout, ho, wo, *r);
                stage_grad(grads, input, din);
            }
            Op::MaxPool2 { input, argmax } => {
                let (n, c, h, w) = input.dims4()?;
                let din = kernels::max_pool2_backward(g, argmax, n * c, h, w);
                stage_grad(grads, input, din);
            }
            Op::GlobalAvgPool { input } => {
                let (n, c, h, w) = input.dims4()?;
                let hw = h * w;
                let mut din = vec![0.0f32; n * c * hw];
                for p in 0..n * c {
                    let gv = g[p] / hw as f32;
                    din[p * hw..(p + 1) * hw].fill(gv);
                }
                stage_grad(grads, input, din);
            }
            Op::ConcatChannels { a, b } => {
                let (n, ca, h, w) = a.dims4()?;
                let (_, cb, _, _) = b.dims4()?;
                let hw = h * w;
                let mut da = vec![0.0f32; n * ca * hw];
                let mut db = vec![0.0f32; n * cb * hw];
                for ni in 0..n {
                    let src = &g[ni * (ca + cb) * hw..][..(ca + cb) * hw];
                    da[ni * ca * hw..][..ca * hw].copy_from_slice(&src[..ca * hw]);
                    db[ni * cb * hw..][..cb * hw].copy_from_slice(&src[ca * hw..]);
                }
                stage_grad(grads, a, da);
                stage_grad(grads, b, db);
            }
            Op::SliceChannels { input, from } => {
                let (n, c, h, w) = input.dims4()?;
                let (_, cs, _, _) = node.dims4()?;
                let hw = h * w;
                let mut din = vec![0.0f32; n * c * hw];
                for ni in 0..n {
                    din[(ni * c + from) * hw..][..cs * hw]
                        .copy_from_slice(&g[ni * cs * hw..][..cs * hw]);
                }
                stage_grad(grads, input, din);
            }
            Op::Binary { a, b, kind } => {
                let out_shape = node.shape();
                let (asp, bsp) = (align_rank(a.shape(), out_shape.len()),
                                  align_rank(b.shape(), out_shape.len()));
                match kind {
                    ElementwiseKind::Add => {
                        let da = kernels::reduce_to_shape(g, out_shape, &asp);
                        let db = kernels::reduce_to_shape(g, out_shape, &bsp);
                        stage_grad(grads, a, da);
                        stage_grad(grads, b, db);
                    }
                    ElementwiseKind::Hadamard => {
                        let gb = kernels::broadcast_binary(
                            g, out_shape, b.data(), &bsp, out_shape, true,
                        );
                        let ga = kernels::broadcast_binary(
                            g, out_shape, a.data(), &asp, out_shape, true,
                        );
                        stage_grad(grads, a, kernels::reduce_to_shape(&gb, out_shape, &asp));
                        stage_grad(grads, b, kernels::reduce_to_shape(&ga, out_shape, &bsp));
                    }
                }
            }
            Op::Dropout { input, mask } => {
                let din: Vec<f32> = g.iter().zip(mask).map(|(gv, mv)| gv * mv).collect();
                stage_grad(grads, input, din);
            }
            Op::Reshape { input } => {
                stage_grad(grads, input, g.to_vec());
            }
            Op::MaeLoss { p, q } => {
                let n = p.len() as f32;
                let scale = g[0] / n;
                let dp: Vec<f32> = p
                    .data()
                    .iter()
                    .zip(q.data())
                    .map(|(pv, qv)| {
                        if pv > qv {
                            scale
                        } else if pv < qv {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let dq: Vec<f32> = dp.iter().map(|v| -v).collect();
                stage_grad(grads, p, dp);
                stage_grad(grads, q, dq);
            }
            Op::MseLoss { p, q } => {
                let n = p.len() as f32;
                let scale = 2.0 * g[0] / n;
                let dp: Vec<f32> = p
                    .data()
                    .iter()
                    .zip(q.data())
                    .map(|(pv, qv)| scale * (pv - qv))
                    .collect();
                let dq: Vec<f32> = dp.iter().map(|v| -v).collect();
                stage_grad(grads, p, dp);
                stage_grad(grads, q, dq);
            }
            Op::DLoss { d_hr, d_sr, smooth } => {
                // L = mean(-smooth*ln(hr)) + mean(-ln(1-sr)), probabilities
                // clamped; the clamped region contributes zero gradient.
                let nh = d_hr.len() as f32;
                let ns = d_sr.len() as f32;
                let dh: Vec<f32> = d_hr
                    .data()
                    .iter()
                    .map(|v| {
                        if *v <= PROB_EPS || *v >= 1.0 - PROB_EPS {
                            0.0
                        } else {
                            g[0] * (-smooth / (v * nh))
                        }
                    })
                    .collect();
                let ds: Vec<f32> = d_sr
                    .data()
                    .iter()
                    .map(|v| {
                        if *v <= PROB_EPS || *v >= 1.0 - PROB_EPS {
                            0.0
                        } else {
                            g[0] / ((1.0 - v) * ns)
                        }
                    })
                    .collect();
                stage_grad(grads, d_hr, dh);
                stage_grad(grads, d_sr, ds);
            }
            Op::GAdvLoss {
                d_sr,
                non_saturating,
            } => {
                let n = d_sr.len() as f32;
                let ds: Vec<f32> = d_sr
                    .data()
                    .iter()
                    .map(|v| {
                        if *v <= PROB_EPS || *v >= 1.0 - PROB_EPS {
                            0.0
                        } else if *non_saturating {
                            g[0] * (-1.0 / (v * n))
                        } else {
                            g[0] * (-1.0 / ((1.0 - v) * n))
                        }
                    })
                    .collect();
                stage_grad(grads, d_sr, ds);
            }
            Op::WeightedSum { terms } => {
                for (wv, t) in terms {
                    stage_grad(grads, t, vec![g[0] * wv]);
                }
            }
            Op::MeanAll { input } => {
                let n = input.len() as f32;
                stage_grad(grads, input, vec![g[0] / n; input.len()]);
            }
            Op::SumAll { input } => {
                stage_grad(grads, input, vec![g[0]; input.len()]);
            }
        }
        Ok(())
    }
}

fn align_rank(shape: &[usize], rank: usize) -> Vec<usize> {
    let mut s = vec![1usize; rank.saturating_sub(shape.len())];
    s.extend_from_slice(shape);
    s
}

/// Cross-correlation (no kernel flip) with explicit zero padding.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (n, cin, h, w) = input.dims4()?;
    let (cout, wc, kh, kw) = weight.dims4()?;
    if wc != cin {
        return Err(Error::shape(
            "conv2d",
            format!("input has {cin} channels but weight expects {wc}"),
        ));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape(
            "conv2d",
            format!("bias shape {:?} != [{cout}]", bias.shape()),
        ));
    }
    if stride == 0 {
        return Err(Error::Config("conv2d stride must be >= 1".into()));
    }
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    if hp < kh || wp < kw {
        return Err(Error::shape(
            "conv2d",
            format!("padded input {hp}x{wp} smaller than kernel {kh}x{kw}"),
        ));
    }
    let (ho, wo) = ((hp - kh) / stride + 1, (wp - kw) / stride + 1);
    let (out, _, _) = kernels::conv2d_forward(
        input.data(),
        n, cin, h, w,
        weight.data(),
        cout, kh, kw,
        bias.data(),
        stride, pad,
    );
    Ok(Tensor::from_op(
        vec![n, cout, ho, wo],
        out,
        Op::Conv2d {
            input: input.clone(),
            weight: weight.clone(),
            bias: bias.clone(),
            stride,
            pad,
        },
    ))
}

/// Affine map: out[n,g] = sum_f in[n,f] * weight[g,f] + bias[g].
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, f) = input.dims2()?;
    let (gdim, wf) = weight.dims2()?;
    if wf != f {
        return Err(Error::shape(
            "dense",
            format!("input features {f} != weight features {wf}"),
        ));
    }
    if bias.shape() != [gdim] {
        return Err(Error::shape(
            "dense",
            format!("bias shape {:?} != [{gdim}]", bias.shape()),
        ));
    }
    let out = kernels::dense_forward(input.data(), n, f, weight.data(), gdim, bias.data());
    Ok(Tensor::from_op(
        vec![n, gdim],
        out,
        Op::Dense {
            input: input.clone(),
            weight: weight.clone(),
            bias: bias.clone(),
        },
    ))
}

/// Elementwise activation. Sigmoid and tanh outputs are clamped one epsilon
/// inside their open ranges so downstream logs stay finite.
pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    let data: Vec<f32> = match kind {
        Activation::Sigmoid => input
            .data()
            .iter()
            .map(|x| (1.0 / (1.0 + (-x).exp())).clamp(PROB_EPS, 1.0 - PROB_EPS))
            .collect(),
        Activation::Tanh => input
            .data()
            .iter()
            .map(|x| x.tanh().clamp(-1.0 + PROB_EPS, 1.0 - PROB_EPS))
            .collect(),
        Activation::Relu => input.data().iter().map(|x| x.max(0.0)).collect(),
        Activation::LeakyRelu(slope) => input
            .data()
            .iter()
            .map(|x| if *x > 0.0 { *x } else { x * slope })
            .collect(),
    };
    Tensor::from_op(
        input.shape().to_vec(),
        data,
        Op::Activation {
            input: input.clone(),
            kind,
        },
    )
}

/// Sub-pixel rearrangement: (N, C*r^2, H, W) -> (N, C, H*r, W*r).
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let (n, cin, h, w) = input.dims4()?;
    if r == 0 || cin % (r * r) != 0 {
        return Err(Error::Config(format!(
            "pixel_shuffle: {cin} channels not divisible by r^2 = {}",
            r * r
        )));
    }
    let out = kernels::pixel_shuffle_forward(input.data(), n, cin, h, w, r);
    Ok(Tensor::from_op(
        vec![n, cin / (r * r), h * r, w * r],
        out,
        Op::PixelShuffle {
            input: input.clone(),
            r,
        },
    ))
}

/// Inverse of [`pixel_shuffle`]: (N, C, H*r, W*r) -> (N, C*r^2, H, W).
pub fn pixel_unshuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let (n, cin, h, w) = input.dims4()?;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::Config(format!(
            "pixel_unshuffle: spatial extent {h}x{w} not divisible by r = {r}"
        )));
    }
    let out = kernels::pixel_unshuffle_forward(input.data(), n, cin, h, w, r);
    Ok(Tensor::from_op(
        vec![n, cin * r * r, h / r, w / r],
        out,
        Op::PixelUnshuffle {
            input: input.clone(),
            r,
        },
    ))
}

/// 2x2 max pool with stride 2. Gradient routes to the first maximal element
/// of each window in row-major order.
pub fn max_pool2(input: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Config(format!(
            "max_pool2 requires even extents, got {h}x{w}"
        )));
    }
    let (out, argmax) = kernels::max_pool2_forward(input.data(), n * c, h, w);
    Ok(Tensor::from_op(
        vec![n, c, h / 2, w / 2],
        out,
        Op::MaxPool2 {
            input: input.clone(),
            argmax,
        },
    ))
}

/// Per-channel spatial mean: (N, C, H, W) -> (N, C, 1, 1).
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    let out = kernels::global_avg_forward(input.data(), n * c, h * w);
    Ok(Tensor::from_op(
        vec![n, c, 1, 1],
        out,
        Op::GlobalAvgPool {
            input: input.clone(),
        },
    ))
}

/// Channel-axis concatenation of two NCHW tensors.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (na, ca, ha, wa) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if na != nb || ha != hb || wa != wb {
        return Err(Error::shape(
            "concat_channels",
            format!(
                "batch/spatial mismatch: {:?} vs {:?}",
                a.shape(),
                b.shape()
            ),
        ));
    }
    let hw = ha * wa;
    let mut out = vec![0.0f32; na * (ca + cb) * hw];
    for ni in 0..na {
        let dst = &mut out[ni * (ca + cb) * hw..][..(ca + cb) * hw];
        dst[..ca * hw].copy_from_slice(&a.data()[ni * ca * hw..][..ca * hw]);
        dst[ca * hw..].copy_from_slice(&b.data()[ni * cb * hw..][..cb * hw]);
    }
    Ok(Tensor::from_op(
        vec![na, ca + cb, ha, wa],
        out,
        Op::ConcatChannels {
            a: a.clone(),
            b: b.clone(),
        },
    ))
}

/// Channels [from, to) of an NCHW tensor.
pub fn slice_channels(input: &Tensor, from: usize, to: usize) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    if from > to || to > c {
        return Err(Error::shape(
            "slice_channels",
            format!("range {from}..{to} out of {c} channels"),
        ));
    }
    let hw = h * w;
    let cs = to - from;
    let mut out = vec![0.0f32; n * cs * hw];
    for ni in 0..n {
        out[ni * cs * hw..][..cs * hw]
            .copy_from_slice(&input.data()[(ni * c + from) * hw..][..cs * hw]);
    }
    Ok(Tensor::from_op(
        vec![n, cs, h, w],
        out,
        Op::SliceChannels {
            input: input.clone(),
            from,
        },
    ))
}

fn binary(a: &Tensor, b: &Tensor, kind: ElementwiseKind) -> Result<Tensor> {
    let rank = a.shape().len().max(b.shape().len());
    let asp = align_rank(a.shape(), rank);
    let bsp = align_rank(b.shape(), rank);
    let mut out_shape = vec![0usize; rank];
    for i in 0..rank {
        out_shape[i] = match (asp[i], bsp[i]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            (x, y) => {
                return Err(Error::shape(
                    "elementwise",
                    format!(
                        "axis {i}: extents {x} and {y} are not broadcastable \
                         (shapes {:?} vs {:?})",
                        a.shape(),
                        b.shape()
                    ),
                ))
            }
        };
    }
    let out = kernels::broadcast_binary(
        a.data(),
        &asp,
        b.data(),
        &bsp,
        &out_shape,
        kind == ElementwiseKind::Hadamard,
    );
    Ok(Tensor::from_op(
        out_shape,
        out,
        Op::Binary {
            a: a.clone(),
            b: b.clone(),
            kind,
        },
    ))
}

/// Broadcasting elementwise op; an extent of 1 stretches over the other
/// operand's extent.
pub fn elementwise(a: &Tensor, b: &Tensor, kind: ElementwiseKind) -> Result<Tensor> {
    binary(a, b, kind)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, ElementwiseKind::Add)
}

pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary(a, b, ElementwiseKind::Hadamard)
}

/// Inverted dropout: train mode zeroes each element with probability `p` and
/// scales survivors by 1/(1-p); eval mode is the identity.
pub fn dropout(input: &Tensor, p: f32, mode: DropoutMode, rng: &mut SeededRng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    if mode == DropoutMode::Eval || p == 0.0 {
        return Ok(input.clone());
    }
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f32> = (0..input.len())
        .map(|_| if rng.uniform01() < p { 0.0 } else { scale })
        .collect();
    let data: Vec<f32> = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok(Tensor::from_op(
        input.shape().to_vec(),
        data,
        Op::Dropout {
            input: input.clone(),
            mask,
        },
    ))
}

/// Same data, new shape; element count must match.
pub fn reshape(input: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
    super::check_len(&shape, input.len())?;
    Ok(Tensor::from_op(
        shape,
        input.data().to_vec(),
        Op::Reshape {
            input: input.clone(),
        },
    ))
}

fn check_same_shape(op: &'static str, p: &Tensor, q: &Tensor) -> Result<()> {
    if p.shape() != q.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", p.shape(), q.shape()),
        ));
    }
    Ok(())
}

/// Mean absolute error over all elements.
pub fn mae_loss_op(p: &Tensor, q: &Tensor) -> Result<Tensor> {
    check_same_shape("mae_loss", p, q)?;
    let mut acc = 0.0f64;
    for (pv, qv) in p.data().iter().zip(q.data()) {
        acc += (*pv as f64 - *qv as f64).abs();
    }
    let val = (acc / p.len() as f64) as f32;
    Ok(Tensor::from_op(
        vec![1],
        vec![val],
        Op::MaeLoss {
            p: p.clone(),
            q: q.clone(),
        },
    ))
}

/// Mean squared error over all elements.
pub fn mse_loss_op(p: &Tensor, q: &Tensor) -> Result<Tensor> {
    check_same_shape("mse_loss", p, q)?;
    let mut acc = 0.0f64;
    for (pv, qv) in p.data().iter().zip(q.data()) {
        let d = *pv as f64 - *qv as f64;
        acc += d * d;
    }
    let val = (acc / p.len() as f64) as f32;
    Ok(Tensor::from_op(
        vec![1],
        vec![val],
        Op::MseLoss {
            p: p.clone(),
            q: q.clone(),
        },
    ))
}

fn clamp_prob(v: f32) -> (f64, bool) {
    if v < PROB_EPS {
        (PROB_EPS as f64, true)
    } else if v > 1.0 - PROB_EPS {
        ((1.0 - PROB_EPS) as f64, true)
    } else {
        (v as f64, false)
    }
}

/// Discriminator loss with one-sided label smoothing on the real term:
/// mean(-smooth*ln d_hr) + mean(-ln(1 - d_sr)). Returns the loss and how many
/// probabilities had to be clamped into [eps, 1-eps].
pub fn d_loss_op(d_hr: &Tensor, d_sr: &Tensor, smooth: f32) -> Result<(Tensor, usize)> {
    let mut clamped = 0usize;
    let mut real = 0.0f64;
    for v in d_hr.data() {
        let (p, c) = clamp_prob(*v);
        clamped += c as usize;
        real += -(smooth as f64) * p.ln();
    }
    let mut fake = 0.0f64;
    for v in d_sr.data() {
        let (p, c) = clamp_prob(*v);
        clamped += c as usize;
        fake += -(1.0 - p).ln();
    }
    let val = (real / d_hr.len() as f64 + fake / d_sr.len() as f64) as f32;
    Ok((
        Tensor::from_op(
            vec![1],
            vec![val],
            Op::DLoss {
                d_hr: d_hr.clone(),
                d_sr: d_sr.clone(),
                smooth,
            },
        ),
        clamped,
    ))
}

/// Adversarial generator loss. Saturating form mean(ln(1 - d_sr)) as the
/// training objective to minimize; the non-saturating variant is
/// mean(-ln d_sr).
pub fn g_adv_loss_op(d_sr: &Tensor, non_saturating: bool) -> Result<(Tensor, usize)> {
    let mut clamped = 0usize;
    let mut acc = 0.0f64;
    for v in d_sr.data() {
        let (p, c) = clamp_prob(*v);
        clamped += c as usize;
        acc += if non_saturating { -p.ln() } else { (1.0 - p).ln() };
    }
    let val = (acc / d_sr.len() as f64) as f32;
    Ok((
        Tensor::from_op(
            vec![1],
            vec![val],
            Op::GAdvLoss {
                d_sr: d_sr.clone(),
                non_saturating,
            },
        ),
        clamped,
    ))
}

/// Linear combination of scalar tensors.
pub fn weighted_sum(terms: &[(f32, &Tensor)]) -> Result<Tensor> {
    let mut acc = 0.0f64;
    for (w, t) in terms {
        acc += *w as f64 * t.item()? as f64;
    }
    Ok(Tensor::from_op(
        vec![1],
        vec![acc as f32],
        Op::WeightedSum {
            terms: terms.iter().map(|(w, t)| (*w, (*t).clone())).collect(),
        },
    ))
}

/// Mean over all elements, as a scalar tensor.
pub fn mean_all(input: &Tensor) -> Result<Tensor> {
    if input.is_empty() {
        return Err(Error::Usage("mean_all on empty tensor".into()));
    }
    let mut acc = 0.0f64;
    for v in input.data() {
        acc += *v as f64;
    }
    let val = (acc / input.len() as f64) as f32;
    Ok(Tensor::from_op(
        vec![1],
        vec![val],
        Op::MeanAll {
            input: input.clone(),
        },
    ))
}

/// Sum over all elements, as a scalar tensor.
pub fn sum_all(input: &Tensor) -> Result<Tensor> {
    let mut acc = 0.0f64;
    for v in input.data() {
        acc += *v as f64;
    }
    Ok(Tensor::from_op(
        vec![1],
        vec![acc as f32],
        Op::SumAll {
            input: input.clone(),
        },
    ))
}
