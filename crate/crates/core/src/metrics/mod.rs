//! Image quality metrics: PSNR, SSIM, FSIM, SRE and UIQ as full-reference
//! measures plus BRISQUE as the no-reference one.
//!
//! All full-reference metrics operate on 8-bit-range luma
//! (Y = 0.299 R + 0.587 G + 0.114 B on the [0, 255] scale); conversion is part
//! of the metric contract. Math is f64 throughout.

mod brisque;
mod fsim;

pub use brisque::{
    brisque_features, brisque_score, fit_brisque_model, mscn_coefficients, BrisqueModel,
    KernelKind, BRISQUE_FEATURES,
};
pub use fsim::fsim;

use crate::data::ImageU8;
use crate::error::{Error, Result};

/// Cap reported for zero-error comparisons.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Luma plane on the [0, 255] scale.
#[derive(Debug, Clone)]
pub struct Luma {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl Luma {
    pub fn from_image(img: &ImageU8) -> Self {
        let mut data = Vec::with_capacity(img.w * img.h);
        for y in 0..img.h {
            for x in 0..img.w {
                let [r, g, b] = img.pixel(x, y);
                data.push(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64);
            }
        }
        Luma {
            w: img.w,
            h: img.h,
            data,
        }
    }

    pub fn from_plane(w: usize, h: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != w * h {
            return Err(Error::shape(
                "luma",
                format!("plane length {} != {w}x{h}", data.len()),
            ));
        }
        Ok(Luma { w, h, data })
    }
}

fn check_same(op: &'static str, a: &Luma, b: &Luma) -> Result<()> {
    if a.w != b.w || a.h != b.h {
        return Err(Error::shape(
            op,
            format!("{}x{} vs {}x{}", a.w, a.h, b.w, b.h),
        ));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB: 10 log10(255^2 / MSE), capped at 100 dB
/// for identical inputs. First argument is the reference.
pub fn psnr(reference: &Luma, test: &Luma) -> Result<f64> {
    check_same("psnr", reference, test)?;
    let mse = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Signal to reconstruction error ratio in dB:
/// 10 log10(mean(ref)^2 / (||ref - test||^2 / n)). The reference mean must be
/// nonzero. Capped at 100 dB. First argument is the reference.
pub fn sre(reference: &Luma, test: &Luma) -> Result<f64> {
    check_same("sre", reference, test)?;
    let n = reference.data.len() as f64;
    let mu = reference.data.iter().sum::<f64>() / n;
    if mu == 0.0 {
        return Err(Error::Data("sre undefined: reference mean is zero".into()));
    }
    let err = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if err == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (mu * mu / err).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Valid-region separable filter (no padding): output is
/// (h - size + 1) x (w - size + 1).
fn filter_valid(src: &[f64], w: usize, h: usize, win: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = win.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    // Horizontal pass.
    let mut mid = vec![0.0f64; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, wv) in win.iter().enumerate() {
                acc += wv * src[y * w + x + i];
            }
            mid[y * ow + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0f64; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, wv) in win.iter().enumerate() {
                acc += wv * mid[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, ow, oh)
}

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, L = 255, averaged over valid window positions. Symmetric in its
/// arguments.
pub fn ssim(reference: &Luma, test: &Luma) -> Result<f64> {
    check_same("ssim", reference, test)?;
    const WIN: usize = 11;
    if reference.w < WIN || reference.h < WIN {
        return Err(Error::Data(format!(
            "ssim needs images of at least {WIN}x{WIN}, got {}x{}",
            reference.w, reference.h
        )));
    }
    let (w, h) = (reference.w, reference.h);
    let win = gaussian_window(WIN, 1.5);
    let x = &reference.data;
    let y = &test.data;
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();

    let (mu_x, ow, oh) = filter_valid(x, w, h, &win);
    let (mu_y, _, _) = filter_valid(y, w, h, &win);
    let (sxx, _, _) = filter_valid(&xx, w, h, &win);
    let (syy, _, _) = filter_valid(&yy, w, h, &win);
    let (sxy, _, _) = filter_valid(&xy, w, h, &win);

    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut acc = 0.0f64;
    for i in 0..ow * oh {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = sxx[i] - mx * mx;
        let vy = syy[i] - my * my;
        let cxy = sxy[i] - mx * my;
        let s = ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
            / ((mx * mx + my * my + c1) * (vx + vy + c2));
        acc += s;
    }
    Ok(acc / (ow * oh) as f64)
}

/// Universal image quality index over sliding 8x8 windows:
/// Q = 4 sigma_xy mean_x mean_y / ((sigma_x^2 + sigma_y^2)(mean_x^2 + mean_y^2)),
/// averaged over non-degenerate windows. Symmetric in its arguments.
pub fn uiq(reference: &Luma, test: &Luma) -> Result<f64> {
    check_same("uiq", reference, test)?;
    const WIN: usize = 8;
    if reference.w < WIN || reference.h < WIN {
        return Err(Error::Data(format!(
            "uiq needs images of at least {WIN}x{WIN}, got {}x{}",
            reference.w, reference.h
        )));
    }
    let (w, h) = (reference.w, reference.h);
    let x = &reference.data;
    let y = &test.data;

    // Summed-area tables for x, y, x^2, y^2, xy.
    let sat = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut s = vec![0.0f64; (w + 1) * (h + 1)];
        for yy in 0..h {
            let mut row = 0.0;
            for xx in 0..w {
                row += f(yy * w + xx);
                s[(yy + 1) * (w + 1) + xx + 1] = s[yy * (w + 1) + xx + 1] + row;
            }
        }
        s
    };
    let sx = sat(&|i| x[i]);
    let sy = sat(&|i| y[i]);
    let sxx = sat(&|i| x[i] * x[i]);
    let syy = sat(&|i| y[i] * y[i]);
    let sxy = sat(&|i| x[i] * y[i]);
    let window_sum = |s: &[f64], x0: usize, y0: usize| -> f64 {
        s[(y0 + WIN) * (w + 1) + x0 + WIN] + s[y0 * (w + 1) + x0]
            - s[y0 * (w + 1) + x0 + WIN]
            - s[(y0 + WIN) * (w + 1) + x0]
    };

    let n = (WIN * WIN) as f64;
    let mut acc = 0.0f64;
    let mut used = 0usize;
    let mut degenerate = 0usize;
    for y0 in 0..=h - WIN {
        for x0 in 0..=w - WIN {
            let mx = window_sum(&sx, x0, y0) / n;
            let my = window_sum(&sy, x0, y0) / n;
            let vx = window_sum(&sxx, x0, y0) / n - mx * mx;
            let vy = window_sum(&syy, x0, y0) / n - my * my;
            let cxy = window_sum(&sxy, x0, y0) / n - mx * my;
            let denom = (vx + vy) * (mx * mx + my * my);
            if denom.abs() < 1e-12 {
                degenerate += 1;
                continue;
            }
            acc += 4.0 * cxy * mx * my / denom;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Data(format!(
            "uiq: all {degenerate} windows degenerate"
        )));
    }
    Ok(acc / used as f64)
}

/// One row of the six-metric battery. BRISQUE is present only when a model
/// file was supplied.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricRow {
    pub psnr: f64,
    pub ssim: f64,
    pub fsim: f64,
    pub sre: f64,
    pub uiq: f64,
    pub brisque: Option<f64>,
}

/// Per-image values and their arithmetic means.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub per_image: Vec<MetricRow>,
    pub mean: MetricRow,
}

impl MetricReport {
    pub fn from_rows(per_image: Vec<MetricRow>) -> Self {
        let n = per_image.len().max(1) as f64;
        let mut mean = MetricRow::default();
        let mut brisque_acc = 0.0;
        let mut brisque_n = 0usize;
        for row in &per_image {
            mean.psnr += row.psnr / n;
            mean.ssim += row.ssim / n;
            mean.fsim += row.fsim / n;
            mean.sre += row.sre / n;
            mean.uiq += row.uiq / n;
            if let Some(b) = row.brisque {
                brisque_acc += b;
                brisque_n += 1;
            }
        }
        if brisque_n > 0 {
            mean.brisque = Some(brisque_acc / brisque_n as f64);
        }
        MetricReport { per_image, mean }
    }

    pub fn len(&self) -> usize {
        self.per_image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_image.is_empty()
    }
}

/// Runs the five full-reference metrics (and BRISQUE on the test image when a
/// model is given).
pub fn full_reference_row(
    reference: &Luma,
    test: &Luma,
    brisque_model: Option<&BrisqueModel>,
) -> Result<MetricRow> {
    Ok(MetricRow {
        psnr: psnr(reference, test)?,
        ssim: ssim(reference, test)?,
        fsim: fsim(reference, test)?,
        sre: sre(reference, test)?,
        uiq: uiq(reference, test)?,
        brisque: match brisque_model {
            Some(model) => Some(brisque_score(&brisque_features(test)?, model)?),
            None => None,
        },
    })
}
