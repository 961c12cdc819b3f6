//! BRISQUE: natural-scene-statistics features (MSCN coefficients and their
//! pairwise products, fitted by generalized Gaussians) plus a pluggable
//! regressor file scoring them. Lower scores mean better quality.
//!
//! The shipped desk-scale regressor is fitted on this repo's synthetic
//! degradation set, so absolute scores are not comparable to values reported
//! against the original BRISQUE model.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use super::Luma;
use crate::error::{Error, Result};

/// Feature vector length: 18 per scale, two scales.
pub const BRISQUE_FEATURES: usize = 36;

const GAUSS_SIZE: usize = 7;
const GAUSS_SIGMA: f64 = 7.0 / 6.0;
/// Variance stabilizer in the MSCN denominator.
const C_STABILIZER: f64 = 1.0;

fn gaussian7() -> Vec<f64> {
    let half = (GAUSS_SIZE / 2) as f64;
    let mut w: Vec<f64> = (0..GAUSS_SIZE)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * GAUSS_SIGMA * GAUSS_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Separable 'same' filtering with reflected borders.
fn filter_same(src: &[f64], w: usize, h: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let half = k / 2;
    let reflect = |i: isize, n: isize| -> usize {
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
    };
    let mut mid = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, wv) in win.iter().enumerate() {
                let ix = reflect(x as isize + i as isize - half as isize, w as isize);
                acc += wv * src[y * w + ix];
            }
            mid[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, wv) in win.iter().enumerate() {
                let iy = reflect(y as isize + i as isize - half as isize, h as isize);
                acc += wv * mid[iy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Mean-subtracted contrast-normalized coefficients.
pub(crate) fn mscn(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    let win = gaussian7();
    let mu = filter_same(img, w, h, &win);
    let sq: Vec<f64> = img.iter().map(|v| v * v).collect();
    let musq = filter_same(&sq, w, h, &win);
    (0..w * h)
        .map(|i| {
            let var = (musq[i] - mu[i] * mu[i]).max(0.0);
            (img[i] - mu[i]) / (var.sqrt() + C_STABILIZER)
        })
        .collect()
}

// Lanczos approximation (g = 7, n = 9).
fn gamma_fn(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = COEF[0];
        let t = x + 7.5;
        for (i, c) in COEF.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

struct GammaTables {
    grid: Vec<f64>,
    /// r(g) = Gamma(1/g) Gamma(3/g) / Gamma(2/g)^2 for the GGD fit.
    ggd_ratio: Vec<f64>,
    /// r(g) = Gamma(2/g)^2 / (Gamma(1/g) Gamma(3/g)) for the AGGD fit.
    aggd_ratio: Vec<f64>,
}

fn tables() -> &'static GammaTables {
    static TABLES: OnceLock<GammaTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let grid: Vec<f64> = (0..9801).map(|i| 0.2 + i as f64 * 0.001).collect();
        let ggd_ratio = grid
            .iter()
            .map(|g| gamma_fn(1.0 / g) * gamma_fn(3.0 / g) / gamma_fn(2.0 / g).powi(2))
            .collect();
        let aggd_ratio = grid
            .iter()
            .map(|g| gamma_fn(2.0 / g).powi(2) / (gamma_fn(1.0 / g) * gamma_fn(3.0 / g)))
            .collect();
        GammaTables {
            grid,
            ggd_ratio,
            aggd_ratio,
        }
    })
}

/// Generalized Gaussian fit by moment matching: returns (alpha, sigma^2).
fn fit_ggd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sigma_sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let e_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if e_abs < 1e-12 {
        return (2.0, sigma_sq);
    }
    let rho = sigma_sq / (e_abs * e_abs);
    let t = tables();
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, r) in t.ggd_ratio.iter().enumerate() {
        let d = (rho - r).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (t.grid[best], sigma_sq)
}

/// Asymmetric generalized Gaussian fit: returns
/// (alpha, mean, left sigma^2, right sigma^2).
fn fit_aggd(x: &[f64]) -> (f64, f64, f64, f64) {
    let mut left_sq = 0.0f64;
    let mut left_n = 0usize;
    let mut right_sq = 0.0f64;
    let mut right_n = 0usize;
    let mut abs_sum = 0.0f64;
    let mut sq_sum = 0.0f64;
    for v in x {
        if *v < 0.0 {
            left_sq += v * v;
            left_n += 1;
        } else if *v > 0.0 {
            right_sq += v * v;
            right_n += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    let n = x.len() as f64;
    if left_n == 0 || right_n == 0 || sq_sum < 1e-12 {
        return (2.0, 0.0, 0.0, 0.0);
    }
    let left_std = (left_sq / left_n as f64).sqrt();
    let right_std = (right_sq / right_n as f64).sqrt();
    let gamma_hat = left_std / right_std.max(1e-12);
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let r_hat_norm = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0)
        / (gamma_hat.powi(2) + 1.0).powi(2);
    let t = tables();
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, r) in t.aggd_ratio.iter().enumerate() {
        let d = (r - r_hat_norm).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    let alpha = t.grid[best];
    let g1 = gamma_fn(1.0 / alpha);
    let g2 = gamma_fn(2.0 / alpha);
    let g3 = gamma_fn(3.0 / alpha);
    let mean = (right_std - left_std) * (g2 / g1) * (g1 / g3).sqrt();
    (alpha, mean, left_std * left_std, right_std * right_std)
}

fn features_one_scale(img: &[f64], w: usize, h: usize, out: &mut Vec<f64>) {
    let m = mscn(img, w, h);
    let (alpha, sigma_sq) = fit_ggd(&m);
    out.push(alpha);
    out.push(sigma_sq);
    // Pairwise products: horizontal, vertical, main diagonal, anti-diagonal.
    let shifts: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];
    for (dy, dx) in shifts {
        let mut prod = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let yy = y as isize + dy;
                let xx = x as isize + dx;
                if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                    prod.push(m[y * w + x] * m[yy as usize * w + xx as usize]);
                }
            }
        }
        let (a, eta, ls, rs) = fit_aggd(&prod);
        out.push(a);
        out.push(eta);
        out.push(ls);
        out.push(rs);
    }
}

fn half_scale(img: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    // 2x2 mean pooling stands in for the reference implementation's
    // bicubic half-scaling; the statistics it feeds are robust to the choice.
    let (ow, oh) = (w / 2, h / 2);
    let mut out = vec![0.0f64; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = 0.25
                * (img[2 * y * w + 2 * x]
                    + img[2 * y * w + 2 * x + 1]
                    + img[(2 * y + 1) * w + 2 * x]
                    + img[(2 * y + 1) * w + 2 * x + 1]);
        }
    }
    (out, ow, oh)
}

/// MSCN coefficients of a luma plane (full scale).
pub fn mscn_coefficients(img: &Luma) -> Vec<f64> {
    mscn(&img.data, img.w, img.h)
}

/// 36 natural-scene-statistics features: GGD fit of the MSCN coefficients and
/// AGGD fits of four orientation products, at full and half scale.
pub fn brisque_features(img: &Luma) -> Result<Vec<f64>> {
    if img.w < 32 || img.h < 32 {
        return Err(Error::Data(format!(
            "brisque needs images of at least 32x32, got {}x{}",
            img.w, img.h
        )));
    }
    let mut out = Vec::with_capacity(BRISQUE_FEATURES);
    features_one_scale(&img.data, img.w, img.h, &mut out);
    let (half, hw, hh) = half_scale(&img.data, img.w, img.h);
    features_one_scale(&half, hw, hh, &mut out);
    debug_assert_eq!(out.len(), BRISQUE_FEATURES);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Rbf,
    Linear,
}

/// Support-vector-expansion regressor with min/max feature scaling, stored as
/// a "BRSQ1" file: text manifest plus a little-endian f32 coefficient blob.
#[derive(Debug, Clone)]
pub struct BrisqueModel {
    pub kernel: KernelKind,
    pub gamma: f64,
    pub bias: f64,
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    /// Support vectors in scaled feature space, sv_count x 36.
    pub support_vectors: Vec<f32>,
    pub dual_coefs: Vec<f32>,
}

const MAGIC: &[u8] = b"BRSQ1\n";

impl BrisqueModel {
    pub fn sv_count(&self) -> usize {
        self.dual_coefs.len()
    }

    fn scale(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let (lo, hi) = (self.feature_min[i], self.feature_max[i]);
                if hi - lo < 1e-12 {
                    0.0
                } else {
                    -1.0 + 2.0 * (f - lo) / (hi - lo)
                }
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let join = |v: &[f64]| {
            v.iter()
                .map(|f| format!("{f:e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut text = Vec::new();
        text.extend_from_slice(MAGIC);
        let kernel = match self.kernel {
            KernelKind::Rbf => "rbf",
            KernelKind::Linear => "linear",
        };
        writeln!(text, "kernel {kernel}").unwrap();
        writeln!(text, "gamma {:e}", self.gamma).unwrap();
        writeln!(text, "bias {:e}", self.bias).unwrap();
        writeln!(text, "sv_count {}", self.sv_count()).unwrap();
        writeln!(text, "feature_min {}", join(&self.feature_min)).unwrap();
        writeln!(text, "feature_max {}", join(&self.feature_max)).unwrap();
        writeln!(text, "blob").unwrap();
        for v in self.support_vectors.iter().chain(&self.dual_coefs) {
            text.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let bad = |m: String| Error::Data(format!("{}: {m}", path.display()));
        if !bytes.starts_with(MAGIC) {
            return Err(bad("not a BRSQ1 model file".into()));
        }
        let mut pos = MAGIC.len();
        let mut kernel = None;
        let mut gamma = None;
        let mut bias = None;
        let mut sv_count = None;
        let mut fmin = None;
        let mut fmax = None;
        loop {
            let end = bytes[pos..]
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| bad("truncated manifest".into()))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end])
                .map_err(|_| bad("manifest is not UTF-8".into()))?;
            pos += end + 1;
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "blob" => break,
                "kernel" => {
                    kernel = Some(match rest {
                        "rbf" => KernelKind::Rbf,
                        "linear" => KernelKind::Linear,
                        other => return Err(bad(format!("unknown kernel '{other}'"))),
                    })
                }
                "gamma" => gamma = Some(rest.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "bias" => bias = Some(rest.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "sv_count" => {
                    sv_count = Some(rest.parse::<usize>().map_err(|e| bad(e.to_string()))?)
                }
                "feature_min" | "feature_max" => {
                    let vals: std::result::Result<Vec<f64>, _> =
                        rest.split_whitespace().map(str::parse::<f64>).collect();
                    let vals = vals.map_err(|e| bad(e.to_string()))?;
                    if vals.len() != BRISQUE_FEATURES {
                        return Err(bad(format!(
                            "{key} needs {BRISQUE_FEATURES} entries, got {}",
                            vals.len()
                        )));
                    }
                    if key == "feature_min" {
                        fmin = Some(vals);
                    } else {
                        fmax = Some(vals);
                    }
                }
                other => return Err(bad(format!("unknown manifest key '{other}'"))),
            }
        }
        let kernel = kernel.ok_or_else(|| bad("missing kernel".into()))?;
        let gamma = gamma.ok_or_else(|| bad("missing gamma".into()))?;
        let bias = bias.ok_or_else(|| bad("missing bias".into()))?;
        let sv_count = sv_count.ok_or_else(|| bad("missing sv_count".into()))?;
        let feature_min = fmin.ok_or_else(|| bad("missing feature_min".into()))?;
        let feature_max = fmax.ok_or_else(|| bad("missing feature_max".into()))?;

        let need = (sv_count * BRISQUE_FEATURES + sv_count) * 4;
        if bytes.len() - pos != need {
            return Err(bad(format!(
                "coefficient blob has {} bytes, expected {need}",
                bytes.len() - pos
            )));
        }
        let mut floats = Vec::with_capacity(need / 4);
        for chunk in bytes[pos..].chunks_exact(4) {
            floats.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        let support_vectors = floats[..sv_count * BRISQUE_FEATURES].to_vec();
        let dual_coefs = floats[sv_count * BRISQUE_FEATURES..].to_vec();
        Ok(BrisqueModel {
            kernel,
            gamma,
            bias,
            feature_min,
            feature_max,
            support_vectors,
            dual_coefs,
        })
    }
}

/// Scores a feature vector with the regressor; lower is better quality.
pub fn brisque_score(features: &[f64], model: &BrisqueModel) -> Result<f64> {
    if features.len() != BRISQUE_FEATURES {
        return Err(Error::shape(
            "brisque_score",
            format!("feature vector length {}", features.len()),
        ));
    }
    let x = model.scale(features);
    let mut score = model.bias;
    for (sv, alpha) in model
        .support_vectors
        .chunks_exact(BRISQUE_FEATURES)
        .zip(&model.dual_coefs)
    {
        let k = match model.kernel {
            KernelKind::Rbf => {
                let d2: f64 = sv
                    .iter()
                    .zip(&x)
                    .map(|(s, v)| (*s as f64 - v) * (*s as f64 - v))
                    .sum();
                (-model.gamma * d2).exp()
            }
            KernelKind::Linear => sv.iter().zip(&x).map(|(s, v)| *s as f64 * v).sum(),
        };
        score += *alpha as f64 * k;
    }
    Ok(score)
}

/// Fits an RBF kernel ridge regressor in dual form (every training point
/// becomes a support vector), producing the same scoring expansion an SVR
/// would. `lambda` is the ridge strength.
pub fn fit_brisque_model(
    features: &[Vec<f64>],
    labels: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<BrisqueModel> {
    let n = features.len();
    if n == 0 || labels.len() != n {
        return Err(Error::Usage(format!(
            "fit needs matching nonempty features/labels, got {n}/{}",
            labels.len()
        )));
    }
    for (i, f) in features.iter().enumerate() {
        if f.len() != BRISQUE_FEATURES {
            return Err(Error::shape(
                "fit_brisque_model",
                format!("feature row {i} has length {}", f.len()),
            ));
        }
    }
    let mut fmin = vec![f64::INFINITY; BRISQUE_FEATURES];
    let mut fmax = vec![f64::NEG_INFINITY; BRISQUE_FEATURES];
    for f in features {
        for i in 0..BRISQUE_FEATURES {
            fmin[i] = fmin[i].min(f[i]);
            fmax[i] = fmax[i].max(f[i]);
        }
    }
    let scaled: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            f.iter()
                .enumerate()
                .map(|(i, v)| {
                    if fmax[i] - fmin[i] < 1e-12 {
                        0.0
                    } else {
                        -1.0 + 2.0 * (v - fmin[i]) / (fmax[i] - fmin[i])
                    }
                })
                .collect()
        })
        .collect();

    // Center the labels; the offset becomes the bias.
    let bias = labels.iter().sum::<f64>() / n as f64;

    // K + lambda I, solved by Cholesky.
    let mut k = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = scaled[i]
                .iter()
                .zip(&scaled[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            k[i * n + j] = (-gamma * d2).exp();
        }
        k[i * n + i] += lambda;
    }
    let mut chol = k;
    for i in 0..n {
        for j in 0..=i {
            let mut sum = chol[i * n + j];
            for kk in 0..j {
                sum -= chol[i * n + kk] * chol[j * n + kk];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Data(
                        "kernel matrix not positive definite; increase lambda".into(),
                    ));
                }
                chol[i * n + i] = sum.sqrt();
            } else {
                chol[i * n + j] = sum / chol[j * n + j];
            }
        }
    }
    // Solve L L^T alpha = y - bias.
    let mut alpha: Vec<f64> = labels.iter().map(|y| y - bias).collect();
    for i in 0..n {
        for j in 0..i {
            let lij = chol[i * n + j];
            alpha[i] -= lij * alpha[j];
        }
        alpha[i] /= chol[i * n + i];
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            let lji = chol[j * n + i];
            alpha[i] -= lji * alpha[j];
        }
        alpha[i] /= chol[i * n + i];
    }

    Ok(BrisqueModel {
        kernel: KernelKind::Rbf,
        gamma,
        bias,
        feature_min: fmin,
        feature_max: fmax,
        support_vectors: scaled
            .iter()
            .flat_map(|row| row.iter().map(|v| *v as f32))
            .collect(),
        dual_coefs: alpha.into_iter().map(|v| v as f32).collect(),
    })
}
