//! Separable bicubic resampling (Keys kernel, a = -0.5) with reflect padding.
//! Used to degrade HR images to LR and to upsample LR back to full resolution
//! for the refiner input and the baseline.

use super::ImageU8;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Keys cubic convolution kernel with a = -0.5.
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

fn reflect(i: isize, n: isize) -> usize {
    // Reflect without repeating the border pixel, e.g. -1 -> 1, n -> n-2.
    let mut i = i;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Resamples one row-major plane to (ow, oh) with pixel-center alignment.
fn resize_plane(src: &[f64], w: usize, h: usize, ow: usize, oh: usize) -> Vec<f64> {
    // Horizontal pass then vertical pass.
    let sx = w as f64 / ow as f64;
    let sy = h as f64 / oh as f64;
    let mut mid = vec![0.0f64; oh.max(h) * ow];

    let taps_x: Vec<(isize, [f64; 4])> = (0..ow)
        .map(|x| {
            let center = (x as f64 + 0.5) * sx - 0.5;
            let base = center.floor() as isize - 1;
            let mut ws = [0.0f64; 4];
            for (k, wk) in ws.iter_mut().enumerate() {
                *wk = cubic_kernel(center - (base + k as isize) as f64);
            }
            (base, ws)
        })
        .collect();
    for y in 0..h {
        let row = &src[y * w..][..w];
        for (x, (base, ws)) in taps_x.iter().enumerate() {
            let mut acc = 0.0f64;
            for (k, wk) in ws.iter().enumerate() {
                acc += wk * row[reflect(base + k as isize, w as isize)];
            }
            mid[y * ow + x] = acc;
        }
    }

    let taps_y: Vec<(isize, [f64; 4])> = (0..oh)
        .map(|y| {
            let center = (y as f64 + 0.5) * sy - 0.5;
            let base = center.floor() as isize - 1;
            let mut ws = [0.0f64; 4];
            for (k, wk) in ws.iter_mut().enumerate() {
                *wk = cubic_kernel(center - (base + k as isize) as f64);
            }
            (base, ws)
        })
        .collect();
    let mut out = vec![0.0f64; oh * ow];
    for (y, (base, ws)) in taps_y.iter().enumerate() {
        for x in 0..ow {
            let mut acc = 0.0f64;
            for (k, wk) in ws.iter().enumerate() {
                acc += wk * mid[reflect(base + k as isize, h as isize) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Bicubic resize of an 8-bit image to out_side x out_side.
pub fn bicubic_resize(img: &ImageU8, out_side: usize) -> Result<ImageU8> {
    if img.w < 4 || img.h < 4 || out_side < 4 {
        return Err(Error::Config(format!(
            "bicubic sides must be >= 4 (got {}x{} -> {out_side})",
            img.w, img.h
        )));
    }
    let mut out = ImageU8::new(out_side, out_side);
    for c in 0..3 {
        let plane: Vec<f64> = (0..img.w * img.h)
            .map(|i| img.data[i * 3 + c] as f64)
            .collect();
        let resized = resize_plane(&plane, img.w, img.h, out_side, out_side);
        for (i, v) in resized.iter().enumerate() {
            out.data[i * 3 + c] = (v.clamp(0.0, 255.0) + 0.5).floor() as u8;
        }
    }
    Ok(out)
}

/// Bicubic resize of an (N, C, H, W) float tensor to out_side x out_side.
/// Values are not clamped; [-1, 1] inputs may slightly overshoot, which the
/// consumers tolerate.
pub fn bicubic_resize_tensor(t: &Tensor, out_side: usize) -> Result<Tensor> {
    let (n, c, h, w) = t.dims4()?;
    if w < 4 || h < 4 || out_side < 4 {
        return Err(Error::Config(format!(
            "bicubic sides must be >= 4 (got {h}x{w} -> {out_side})"
        )));
    }
    let mut data = Vec::with_capacity(n * c * out_side * out_side);
    for p in 0..n * c {
        let plane: Vec<f64> = t.data()[p * h * w..][..h * w]
            .iter()
            .map(|v| *v as f64)
            .collect();
        let resized = resize_plane(&plane, w, h, out_side, out_side);
        data.extend(resized.into_iter().map(|v| v as f32));
    }
    Tensor::new(vec![n, c, out_side, out_side], data)
}
