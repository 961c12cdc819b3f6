//! Raw numeric kernels behind the tensor ops.
//!
//! Parallel kernels partition work by output element, and every output element
//! is accumulated in a fixed sequential order, so results are bitwise
//! identical for any thread count. Scalar reductions accumulate in f64.

use rayon::prelude::*;

/// Below roughly this many multiply-adds the rayon dispatch overhead
/// dominates.
const PAR_MIN_WORK: usize = 1 << 16;

fn for_each_chunk<F>(out: &mut [f32], chunk: usize, work: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    if work >= PAR_MIN_WORK && out.len() > chunk {
        out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    } else {
        for (i, c) in out.chunks_mut(chunk).enumerate() {
            f(i, c);
        }
    }
}

/// Eight f32 accumulator lanes with a fixed summation structure: vectorizes
/// while staying deterministic.
#[derive(Clone, Copy)]
struct Lanes([f32; 8]);

impl Lanes {
    fn new() -> Self {
        Lanes([0.0; 8])
    }

    #[inline]
    fn fma_rows(&mut self, a: &[f32], b: &[f32]) {
        let ac = a.chunks_exact(8);
        let bc = b.chunks_exact(8);
        let (ra, rb) = (ac.remainder(), bc.remainder());
        for (av, bv) in ac.zip(bc) {
            for l in 0..8 {
                self.0[l] += av[l] * bv[l];
            }
        }
        for (l, (av, bv)) in ra.iter().zip(rb).enumerate() {
            self.0[l] += av * bv;
        }
    }

    fn sum(&self) -> f32 {
        ((self.0[0] + self.0[1]) + (self.0[2] + self.0[3]))
            + ((self.0[4] + self.0[5]) + (self.0[6] + self.0[7]))
    }
}

/// Zero-pads each HxW plane of an NCHW buffer by `pad` on every side.
fn pad_planes(input: &[f32], planes: usize, h: usize, w: usize, pad: usize) -> Vec<f32> {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0f32; planes * hp * wp];
    for p in 0..planes {
        let src = &input[p * h * w..][..h * w];
        let dst = &mut out[p * hp * wp..][..hp * wp];
        for y in 0..h {
            dst[(y + pad) * wp + pad..][..w].copy_from_slice(&src[y * w..][..w]);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward(
    input: &[f32],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    cout: usize,
    kh: usize,
    kw: usize,
    bias: &[f32],
    stride: usize,
    pad: usize,
) -> (Vec<f32>, usize, usize) {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let ho = (hp - kh) / stride + 1;
    let wo = (wp - kw) / stride + 1;
    let padded;
    let inp: &[f32] = if pad == 0 {
        input
    } else {
        padded = pad_planes(input, n * cin, h, w, pad);
        &padded
    };

    let mut out = vec![0.0f32; n * cout * ho * wo];
    let work = n * cout * ho * wo * cin * kh * kw;
    // Output rows stay hot while every kernel tap of every input channel is
    // applied to them, so each input plane is streamed once per output
    // channel instead of once per tap.
    for_each_chunk(&mut out, ho * wo, work, |idx, och| {
        let (ni, o) = (idx / cout, idx % cout);
        och.fill(bias[o]);
        for (y, orow) in och.chunks_exact_mut(wo).enumerate() {
            for ci in 0..cin {
                let ich = &inp[(ni * cin + ci) * hp * wp..][..hp * wp];
                let wch = &weight[(o * cin + ci) * kh * kw..][..kh * kw];
                for ky in 0..kh {
                    let ibase = (y * stride + ky) * wp;
                    for kx in 0..kw {
                        let wv = wch[ky * kw + kx];
                        if stride == 1 {
                            let irow = &ich[ibase + kx..][..wo];
                            for (ov, iv) in orow.iter_mut().zip(irow) {
                                *ov += wv * iv;
                            }
                        } else {
                            for (x, ov) in orow.iter_mut().enumerate() {
                                *ov += wv * ich[ibase + kx + x * stride];
                            }
                        }
                    }
                }
            }
        }
    });
    (out, ho, wo)
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward_input(
    dout: &[f32],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<f32> {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut dpad = vec![0.0f32; n * cin * hp * wp];
    let work = n * cin * cout * ho * wo * kh * kw;
    // Same row-hot ordering as the forward pass: each output-gradient row is
    // scattered through all taps while it sits in L1.
    for_each_chunk(&mut dpad, hp * wp, work, |idx, dch| {
        let (ni, ci) = (idx / cin, idx % cin);
        for o in 0..cout {
            let doch = &dout[(ni * cout + o) * ho * wo..][..ho * wo];
            let wch = &weight[(o * cin + ci) * kh * kw..][..kh * kw];
            for (y, drow) in doch.chunks_exact(wo).enumerate() {
                for ky in 0..kh {
                    let pbase = (y * stride + ky) * wp;
                    for kx in 0..kw {
                        let wv = wch[ky * kw + kx];
                        if stride == 1 {
                            let prow = &mut dch[pbase + kx..][..wo];
                            for (pv, dv) in prow.iter_mut().zip(drow) {
                                *pv += wv * dv;
                            }
                        } else {
                            for (x, dv) in drow.iter().enumerate() {
                                dch[pbase + kx + x * stride] += wv * dv;
                            }
                        }
                    }
                }
            }
        }
    });
    if pad == 0 {
        return dpad;
    }
    let mut din = vec![0.0f32; n * cin * h * w];
    for p in 0..n * cin {
        let src = &dpad[p * hp * wp..][..hp * wp];
        let dst = &mut din[p * h * w..][..h * w];
        for y in 0..h {
            dst[y * w..][..w].copy_from_slice(&src[(y + pad) * wp + pad..][..w]);
        }
    }
    din
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward_weight(
    input: &[f32],
    dout: &[f32],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<f32> {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let padded;
    let inp: &[f32] = if pad == 0 {
        input
    } else {
        padded = pad_planes(input, n * cin, h, w, pad);
        &padded
    };
    let mut dw = vec![0.0f32; cout * cin * kh * kw];
    let work = cout * cin * kh * kw * n * ho * wo;
    // Row-hot ordering with one lane accumulator per kernel tap: each
    // gradient row and its neighbouring input rows are read once per
    // channel pair.
    for_each_chunk(&mut dw, kh * kw, work, |idx, dwk| {
        let (o, ci) = (idx / cin, idx % cin);
        let mut lanes = vec![Lanes::new(); kh * kw];
        let mut accs = vec![0.0f64; kh * kw];
        for ni in 0..n {
            let ich = &inp[(ni * cin + ci) * hp * wp..][..hp * wp];
            let doch = &dout[(ni * cout + o) * ho * wo..][..ho * wo];
            for (y, drow) in doch.chunks_exact(wo).enumerate() {
                for ky in 0..kh {
                    let base = (y * stride + ky) * wp;
                    for kx in 0..kw {
                        if stride == 1 {
                            lanes[ky * kw + kx].fma_rows(drow, &ich[base + kx..][..wo]);
                        } else {
                            let mut s = 0.0f32;
                            for (x, dv) in drow.iter().enumerate() {
                                s += dv * ich[base + kx + x * stride];
                            }
                            accs[ky * kw + kx] += s as f64;
                        }
                    }
                }
            }
        }
        for t in 0..kh * kw {
            dwk[t] = (accs[t] + lanes[t].sum() as f64) as f32;
        }
    });
    dw
}

pub fn conv2d_backward_bias(dout: &[f32], n: usize, cout: usize, howo: usize) -> Vec<f32> {
    let mut db = vec![0.0f32; cout];
    for (o, dbo) in db.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for ni in 0..n {
            for v in &dout[(ni * cout + o) * howo..][..howo] {
                acc += *v as f64;
            }
        }
        *dbo = acc as f32;
    }
    db
}

pub fn dense_forward(
    input: &[f32],
    n: usize,
    f: usize,
    weight: &[f32],
    g: usize,
    bias: &[f32],
) -> Vec<f32> {
    let mut out = vec![0.0f32; n * g];
    for_each_chunk(&mut out, g, n * g * f, |ni, orow| {
        let irow = &input[ni * f..][..f];
        for (gi, ov) in orow.iter_mut().enumerate() {
            let wrow = &weight[gi * f..][..f];
            let mut acc = 0.0f64;
            for (iv, wv) in irow.iter().zip(wrow) {
                acc += (*iv as f64) * (*wv as f64);
            }
            *ov = (acc + bias[gi] as f64) as f32;
        }
    });
    out
}

pub fn dense_backward(
    input: &[f32],
    dout: &[f32],
    n: usize,
    f: usize,
    weight: &[f32],
    g: usize,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut din = vec![0.0f32; n * f];
    for_each_chunk(&mut din, f, n * g * f, |ni, drow| {
        let dorow = &dout[ni * g..][..g];
        for (gi, dv) in dorow.iter().enumerate() {
            let wrow = &weight[gi * f..][..f];
            for (dr, wv) in drow.iter_mut().zip(wrow) {
                *dr += dv * wv;
            }
        }
    });
    let mut dw = vec![0.0f32; g * f];
    for_each_chunk(&mut dw, f, n * g * f, |gi, dwrow| {
        for ni in 0..n {
            let dv = dout[ni * g + gi];
            let irow = &input[ni * f..][..f];
            for (dwv, iv) in dwrow.iter_mut().zip(irow) {
                *dwv += dv * iv;
            }
        }
    });
    let mut db = vec![0.0f32; g];
    for (gi, dbv) in db.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for ni in 0..n {
            acc += dout[ni * g + gi] as f64;
        }
        *dbv = acc as f32;
    }
    (din, dw, db)
}

/// 2x2 max pool, stride 2. Returns the pooled values and, per output element,
/// the flat index of the winning input element inside its channel plane.
/// Ties go to the first maximal element in row-major order.
pub fn max_pool2_forward(
    input: &[f32],
    planes: usize,
    h: usize,
    w: usize,
) -> (Vec<f32>, Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0f32; planes * ho * wo];
    let mut arg = vec![0u32; planes * ho * wo];
    for p in 0..planes {
        let ich = &input[p * h * w..][..h * w];
        let och = &mut out[p * ho * wo..][..ho * wo];
        let ach = &mut arg[p * ho * wo..][..ho * wo];
        for y in 0..ho {
            for x in 0..wo {
                let mut best = f32::NEG_INFINITY;
                let mut besti = 0u32;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let ii = (2 * y + dy) * w + 2 * x + dx;
                        let v = ich[ii];
                        if v > best {
                            best = v;
                            besti = ii as u32;
                        }
                    }
                }
                och[y * wo + x] = best;
                ach[y * wo + x] = besti;
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward(
    dout: &[f32],
    arg: &[u32],
    planes: usize,
    h: usize,
    w: usize,
) -> Vec<f32> {
    let howo = (h / 2) * (w / 2);
    let mut din = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        let dch = &mut din[p * h * w..][..h * w];
        let doch = &dout[p * howo..][..howo];
        let ach = &arg[p * howo..][..howo];
        for (dv, ai) in doch.iter().zip(ach) {
            dch[*ai as usize] += dv;
        }
    }
    din
}

pub fn global_avg_forward(input: &[f32], planes: usize, hw: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; planes];
    for (p, ov) in out.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for v in &input[p * hw..][..hw] {
            acc += *v as f64;
        }
        *ov = (acc / hw as f64) as f32;
    }
    out
}

/// out(n, c, h*r+dy, w*r+dx) = in(n, c*r^2 + dy*r + dx, h, w)
pub fn pixel_shuffle_forward(
    input: &[f32],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    r: usize,
) -> Vec<f32> {
    let cout = cin / (r * r);
    let (ho, wo) = (h * r, w * r);
    let mut out = vec![0.0f32; n * cin * h * w];
    for ni in 0..n {
        for co in 0..cout {
            for dy in 0..r {
                for dx in 0..r {
                    let ci = co * r * r + dy * r + dx;
                    let ich = &input[(ni * cin + ci) * h * w..][..h * w];
                    let och = &mut out[(ni * cout + co) * ho * wo..][..ho * wo];
                    for y in 0..h {
                        for x in 0..w {
                            och[(y * r + dy) * wo + x * r + dx] = ich[y * w + x];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Exact inverse of [`pixel_shuffle_forward`].
pub fn pixel_unshuffle_forward(
    input: &[f32],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    r: usize,
) -> Vec<f32> {
    let cout = cin * r * r;
    let (ho, wo) = (h / r, w / r);
    let mut out = vec![0.0f32; n * cin * h * w];
    for ni in 0..n {
        for ci in 0..cin {
            let ich = &input[(ni * cin + ci) * h * w..][..h * w];
            for dy in 0..r {
                for dx in 0..r {
                    let co = ci * r * r + dy * r + dx;
                    let och = &mut out[(ni * cout + co) * ho * wo..][..ho * wo];
                    for y in 0..ho {
                        for x in 0..wo {
                            och[y * wo + x] = ich[(y * r + dy) * w + x * r + dx];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Strides of a shape, with stride 0 on broadcast (extent-1) axes relative
/// to the output shape.
pub fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    debug_assert_eq!(shape.len(), out_shape.len());
    let mut strides = vec![0usize; shape.len()];
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        strides[i] = if shape[i] == 1 && out_shape[i] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Elementwise binary op with numpy-style broadcasting. Shapes must already
/// be rank-aligned; each axis extent equals the output's or is 1.
pub fn broadcast_binary(
    a: &[f32],
    a_shape: &[usize],
    b: &[f32],
    b_shape: &[usize],
    out_shape: &[usize],
    mul: bool,
) -> Vec<f32> {
    let total: usize = out_shape.iter().product();
    // Fast paths: identical shapes, and scalar b.
    if a_shape == out_shape && b_shape == out_shape {
        let mut out = vec![0.0f32; total];
        if mul {
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o = x * y;
            }
        } else {
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o = x + y;
            }
        }
        return out;
    }
    if b.len() == 1 && a_shape == out_shape {
        let s = b[0];
        return a
            .iter()
            .map(|x| if mul { x * s } else { x + s })
            .collect();
    }
    if a.len() == 1 && b_shape == out_shape {
        let s = a[0];
        return b
            .iter()
            .map(|x| if mul { x * s } else { x + s })
            .collect();
    }

    let sa = broadcast_strides(a_shape, out_shape);
    let sb = broadcast_strides(b_shape, out_shape);
    let rank = out_shape.len();
    let mut out = vec![0.0f32; total];
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in out.iter_mut() {
        let (x, y) = (a[ia], b[ib]);
        *o = if mul { x * y } else { x + y };
        // Odometer increment with running flat offsets.
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            ia += sa[ax];
            ib += sb[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
            ia -= sa[ax] * out_shape[ax];
            ib -= sb[ax] * out_shape[ax];
        }
    }
    out
}

/// Sums `grad` (of `out_shape`) down to `shape` by collapsing broadcast axes.
/// f64 accumulation.
pub fn reduce_to_shape(grad: &[f32], out_shape: &[usize], shape: &[usize]) -> Vec<f32> {
    if shape == out_shape {
        return grad.to_vec();
    }
    let strides = broadcast_strides(shape, out_shape);
    let rank = out_shape.len();
    let n: usize = shape.iter().product();
    let mut acc = vec![0.0f64; n];
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for g in grad {
        acc[off] += *g as f64;
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
            off -= strides[ax] * out_shape[ax];
        }
    }
    acc.into_iter().map(|v| v as f32).collect()
}
