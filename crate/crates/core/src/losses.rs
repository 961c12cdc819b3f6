//! Training objectives: pixel losses, adversarial losses with one-sided label
//! smoothing, a fixed-weight perceptual feature distance, and the weighted
//! totals for both training stages.

use crate::error::{Error, Result};
use crate::nn::lrelu;
use crate::tensor::{
    conv2d, d_loss_op, g_adv_loss_op, he_uniform, mae_loss_op, mse_loss_op, weighted_sum,
    SeededRng, Tensor,
};

/// Weight on the adversarial term in the stage-1 generator objective.
pub const ADV_WEIGHT: f32 = 0.003;

/// Mean absolute error between same-shape tensors.
pub fn mae_loss(p: &Tensor, q: &Tensor) -> Result<Tensor> {
    mae_loss_op(p, q)
}

/// Mean squared error between same-shape tensors.
pub fn mse_loss(p: &Tensor, q: &Tensor) -> Result<Tensor> {
    mse_loss_op(p, q)
}

/// Discriminator loss: mean(-smooth * ln D(hr)) + mean(-ln(1 - D(sr))).
/// The real target is smoothed (one-sided); the fake term never sees the
/// smoothing constant. Inputs outside (0, 1) are clamped to [1e-7, 1 - 1e-7];
/// the returned count says how many were.
pub fn d_loss(d_hr: &Tensor, d_sr: &Tensor, smooth: f32) -> Result<(Tensor, usize)> {
    d_loss_op(d_hr, d_sr, smooth)
}

/// Saturating adversarial generator loss mean(ln(1 - D(sr))), minimized.
pub fn g_adv_loss(d_sr: &Tensor) -> Result<(Tensor, usize)> {
    g_adv_loss_op(d_sr, false)
}

/// Non-saturating variant mean(-ln D(sr)).
pub fn g_adv_loss_non_saturating(d_sr: &Tensor) -> Result<(Tensor, usize)> {
    g_adv_loss_op(d_sr, true)
}

/// Fixed-weight convolutional feature pyramid standing in for a pretrained
/// perceptual network: four 3x3 conv + LeakyReLU stages (stride 2 between
/// stages), tapped after each stage. Weights are drawn once from a seeded
/// He-uniform init and frozen; the structural feature distance is what
/// matters, not any particular pretrained representation.
pub struct PerceptualExtractor {
    pub widths: Vec<usize>,
    pub seed: u64,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl PerceptualExtractor {
    pub fn new(seed: u64) -> Self {
        Self::with_widths(seed, &[8, 16, 32, 64])
    }

    pub fn with_widths(seed: u64, widths: &[usize]) -> Self {
        let mut rng = SeededRng::new(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut in_ch = 3;
        for w in widths {
            let fan_in = in_ch * 9;
            let data = he_uniform(&mut rng, fan_in, w * fan_in);
            weights.push(
                Tensor::new(vec![*w, in_ch, 3, 3], data).expect("init length matches shape"),
            );
            biases.push(Tensor::zeros(vec![*w]));
            in_ch = *w;
        }
        PerceptualExtractor {
            widths: widths.to_vec(),
            seed,
            weights,
            biases,
        }
    }

    /// Replaces the frozen filters with externally supplied ones (e.g. from a
    /// checkpoint-format file). Shapes must match stage for stage.
    pub fn load_weights(&mut self, weights: Vec<Tensor>, biases: Vec<Tensor>) -> Result<()> {
        if weights.len() != self.weights.len() || biases.len() != self.biases.len() {
            return Err(Error::Config(format!(
                "perceptual extractor expects {} stages",
                self.weights.len()
            )));
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.shape() != self.weights[i].shape() || b.shape() != self.biases[i].shape() {
                return Err(Error::shape(
                    "perceptual_load",
                    format!("stage {i}: {:?} vs {:?}", w.shape(), self.weights[i].shape()),
                ));
            }
        }
        self.weights = weights;
        self.biases = biases;
        Ok(())
    }

    /// Feature maps after each stage.
    pub fn features(&self, img: &Tensor) -> Result<Vec<Tensor>> {
        let mut taps = Vec::with_capacity(self.weights.len());
        let mut h = img.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            h = lrelu(&conv2d(&h, w, b, stride, 1)?);
            taps.push(h.clone());
        }
        Ok(taps)
    }
}

/// Sum over tap layers of the mean squared Euclidean distance between the
/// feature representations of the two images.
pub fn perceptual_loss(hr: &Tensor, sr: &Tensor, extractor: &PerceptualExtractor) -> Result<Tensor> {
    if hr.shape() != sr.shape() {
        return Err(Error::shape(
            "perceptual_loss",
            format!("{:?} vs {:?}", hr.shape(), sr.shape()),
        ));
    }
    let f_hr = extractor.features(hr)?;
    let f_sr = extractor.features(sr)?;
    let per_tap: Vec<Tensor> = f_hr
        .iter()
        .zip(&f_sr)
        .map(|(a, b)| mse_loss_op(a, b))
        .collect::<Result<_>>()?;
    let terms: Vec<(f32, &Tensor)> = per_tap.iter().map(|t| (1.0, t)).collect();
    weighted_sum(&terms)
}

/// Stage-1 generator objective, with its components broken out for logging.
pub struct GeneratorLoss {
    pub total: Tensor,
    pub adv: f32,
    pub percep: f32,
    pub mae: f32,
    pub clamped: usize,
}

/// total = 0.003 * adv + perceptual + mae.
pub fn total_generator_loss(
    hr: &Tensor,
    sr: &Tensor,
    d_sr: &Tensor,
    extractor: &PerceptualExtractor,
) -> Result<GeneratorLoss> {
    let (adv, clamped) = g_adv_loss(d_sr)?;
    let percep = perceptual_loss(hr, sr, extractor)?;
    let mae = mae_loss(hr, sr)?;
    let total = weighted_sum(&[(ADV_WEIGHT, &adv), (1.0, &percep), (1.0, &mae)])?;
    Ok(GeneratorLoss {
        total,
        adv: adv.item()?,
        percep: percep.item()?,
        mae: mae.item()?,
        clamped,
    })
}

/// Stage-2 refiner objective, components broken out.
pub struct UNetLoss {
    pub total: Tensor,
    pub percep: f32,
    pub mse: f32,
}

/// total = perceptual + mse; no adversarial component.
pub fn unet_loss(hr: &Tensor, sr_u: &Tensor, extractor: &PerceptualExtractor) -> Result<UNetLoss> {
    let percep = perceptual_loss(hr, sr_u, extractor)?;
    let mse = mse_loss(hr, sr_u)?;
    let total = weighted_sum(&[(1.0, &percep), (1.0, &mse)])?;
    Ok(UNetLoss {
        total,
        percep: percep.item()?,
        mse: mse.item()?,
    })
}
