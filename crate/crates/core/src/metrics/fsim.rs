//! Feature similarity index: phase congruency (log-Gabor filter bank, 4
//! scales x 4 orientations, noise-thresholded energy) combined with Scharr
//! gradient magnitude, pooled over the maximum phase-congruency map.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Luma;
use crate::error::Result;

const NSCALE: usize = 4;
const NORIENT: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ONF: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
const NOISE_K: f64 = 2.0;
const EPSILON: f64 = 1e-4;
/// Phase-congruency stabilizer.
const T1: f64 = 0.85;
/// Gradient-magnitude stabilizer.
const T2: f64 = 160.0;

struct Fft2 {
    w: usize,
    h: usize,
    planner: FftPlanner<f64>,
}

impl Fft2 {
    fn new(w: usize, h: usize) -> Self {
        Fft2 {
            w,
            h,
            planner: FftPlanner::new(),
        }
    }

    fn transform(&mut self, buf: &mut [Complex<f64>], inverse: bool) {
        let (w, h) = (self.w, self.h);
        let row_fft = if inverse {
            self.planner.plan_fft_inverse(w)
        } else {
            self.planner.plan_fft_forward(w)
        };
        for row in buf.chunks_exact_mut(w) {
            row_fft.process(row);
        }
        let col_fft = if inverse {
            self.planner.plan_fft_inverse(h)
        } else {
            self.planner.plan_fft_forward(h)
        };
        let mut col = vec![Complex::default(); h];
        for x in 0..w {
            for y in 0..h {
                col[y] = buf[y * w + x];
            }
            col_fft.process(&mut col);
            for y in 0..h {
                buf[y * w + x] = col[y];
            }
        }
        if inverse {
            let scale = 1.0 / (w * h) as f64;
            for v in buf.iter_mut() {
                *v *= scale;
            }
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Phase congruency map of a plane.
fn phase_congruency(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    let n = w * h;
    let mut fft = Fft2::new(w, h);
    let mut spectrum: Vec<Complex<f64>> = img.iter().map(|v| Complex::new(*v, 0.0)).collect();
    fft.transform(&mut spectrum, false);

    // Frequency grids in FFT (unshifted) layout.
    let freq_coord = |i: usize, extent: usize| -> f64 {
        let half = extent / 2;
        (((i + half) % extent) as f64 - half as f64) / extent as f64
    };
    let mut radius = vec![0.0f64; n];
    let mut sin_theta = vec![0.0f64; n];
    let mut cos_theta = vec![0.0f64; n];
    for y in 0..h {
        let fy = freq_coord(y, h);
        for x in 0..w {
            let fx = freq_coord(x, w);
            let r = (fx * fx + fy * fy).sqrt();
            let th = (-fy).atan2(fx);
            radius[y * w + x] = r;
            sin_theta[y * w + x] = th.sin();
            cos_theta[y * w + x] = th.cos();
        }
    }
    radius[0] = 1.0;

    // Radial log-Gabor components, shared across orientations.
    let log_sigma = SIGMA_ONF.ln();
    let mut log_gabor: Vec<Vec<f64>> = Vec::with_capacity(NSCALE);
    for s in 0..NSCALE {
        let f0 = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
        let mut g: Vec<f64> = radius
            .iter()
            .map(|r| {
                let lr = (r / f0).ln();
                let lowpass = 1.0 / (1.0 + (r / 0.45).powi(30));
                (-(lr * lr) / (2.0 * log_sigma * log_sigma)).exp() * lowpass
            })
            .collect();
        g[0] = 0.0;
        log_gabor.push(g);
    }

    let theta_sigma = std::f64::consts::PI / NORIENT as f64 / D_THETA_ON_SIGMA;
    let mut energy_all = vec![0.0f64; n];
    let mut an_all = vec![0.0f64; n];

    for o in 0..NORIENT {
        let angle = o as f64 * std::f64::consts::PI / NORIENT as f64;
        let (sa, ca) = (angle.sin(), angle.cos());
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let ds = sin_theta[i] * ca - cos_theta[i] * sa;
                let dc = cos_theta[i] * ca + sin_theta[i] * sa;
                let dtheta = ds.atan2(dc).abs();
                (-(dtheta * dtheta) / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut sum_e = vec![0.0f64; n];
        let mut sum_o = vec![0.0f64; n];
        let mut sum_an = vec![0.0f64; n];
        let mut eo_scales: Vec<Vec<Complex<f64>>> = Vec::with_capacity(NSCALE);
        let mut tau = 0.0f64;
        for s in 0..NSCALE {
            let mut band: Vec<Complex<f64>> = (0..n)
                .map(|i| spectrum[i] * (log_gabor[s][i] * spread[i]))
                .collect();
            fft.transform(&mut band, true);
            let mut an = vec![0.0f64; n];
            for i in 0..n {
                an[i] = band[i].norm();
                sum_an[i] += an[i];
                sum_e[i] += band[i].re;
                sum_o[i] += band[i].im;
            }
            if s == 0 {
                tau = median(&an) / (4.0f64.ln()).sqrt();
            }
            eo_scales.push(band);
        }

        let mut energy = vec![0.0f64; n];
        for i in 0..n {
            let x_energy = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + EPSILON;
            let mean_e = sum_e[i] / x_energy;
            let mean_o = sum_o[i] / x_energy;
            for eo in &eo_scales {
                let (e, oo) = (eo[i].re, eo[i].im);
                energy[i] += e * mean_e + oo * mean_o - (e * mean_o - oo * mean_e).abs();
            }
        }

        // Noise threshold from the smallest-scale amplitude distribution.
        let total_tau = tau * (1.0 - (1.0 / MULT).powi(NSCALE as i32)) / (1.0 - 1.0 / MULT);
        let noise_mean = total_tau * (std::f64::consts::PI / 2.0).sqrt();
        let noise_sigma = total_tau * ((4.0 - std::f64::consts::PI) / 2.0).sqrt();
        let t = (noise_mean + NOISE_K * noise_sigma) / 1.7;
        for i in 0..n {
            energy_all[i] += (energy[i] - t).max(0.0);
            an_all[i] += sum_an[i];
        }
    }

    (0..n).map(|i| energy_all[i] / (an_all[i] + EPSILON)).collect()
}

/// Scharr gradient magnitude with zero padding.
fn gradient_magnitude(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    let kx = [
        [3.0, 0.0, -3.0],
        [10.0, 0.0, -10.0],
        [3.0, 0.0, -3.0],
    ];
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut gx = 0.0f64;
            let mut gy = 0.0f64;
            for dy in 0..3 {
                for dx in 0..3 {
                    let iy = y as isize + dy as isize - 1;
                    let ix = x as isize + dx as isize - 1;
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                        continue;
                    }
                    let v = img[iy as usize * w + ix as usize];
                    gx += kx[dy][dx] / 16.0 * v;
                    gy += kx[dx][dy] / 16.0 * v;
                }
            }
            out[y * w + x] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Average-pool downsampling used when images exceed the reference working
/// resolution (factor = round(min(side) / 256), at least 1).
fn downsample(img: &Luma) -> (Vec<f64>, usize, usize) {
    let f = ((img.w.min(img.h) as f64 / 256.0).round() as usize).max(1);
    if f == 1 {
        return (img.data.clone(), img.w, img.h);
    }
    // f x f mean filter ('same', zero padded) then stride-f sampling.
    let (w, h) = (img.w, img.h);
    let half = (f - 1) / 2;
    let mut filtered = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in 0..f {
                for dx in 0..f {
                    let iy = y as isize + dy as isize - half as isize;
                    let ix = x as isize + dx as isize - half as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                        acc += img.data[iy as usize * w + ix as usize];
                    }
                }
            }
            filtered[y * w + x] = acc / (f * f) as f64;
        }
    }
    let ow = w.div_ceil(f);
    let oh = h.div_ceil(f);
    let mut out = vec![0.0f64; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = filtered[y * f * w + x * f];
        }
    }
    (out, ow, oh)
}

/// Feature similarity index in [0, 1]; 1 for identical images. Symmetric in
/// its arguments.
pub fn fsim(reference: &Luma, test: &Luma) -> Result<f64> {
    super::check_same("fsim", reference, test)?;
    if reference.w < 32 || reference.h < 32 {
        return Err(crate::error::Error::Data(format!(
            "fsim needs images of at least 32x32, got {}x{}",
            reference.w, reference.h
        )));
    }
    let (a, w, h) = downsample(reference);
    let (b, _, _) = downsample(test);

    let pc1 = phase_congruency(&a, w, h);
    let pc2 = phase_congruency(&b, w, h);
    let g1 = gradient_magnitude(&a, w, h);
    let g2 = gradient_magnitude(&b, w, h);

    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..w * h {
        let s_pc = (2.0 * pc1[i] * pc2[i] + T1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + T1);
        let s_g = (2.0 * g1[i] * g2[i] + T2) / (g1[i] * g1[i] + g2[i] * g2[i] + T2);
        let pcm = pc1[i].max(pc2[i]);
        num += s_pc * s_g * pcm;
        den += pcm;
    }
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok(num / den)
}
