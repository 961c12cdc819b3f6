//! Two-stage training: adversarial training of the generator against the
//! attribute-conditioned discriminator, then supervised training of the U-Net
//! refiner on frozen stage-1 outputs. Plus checkpointing and split
//! evaluation.

mod checkpoint;

pub use checkpoint::{checkpoint_load, checkpoint_save, LoadedCheckpoint};

use std::path::Path;

use crate::attributes::AttributeVector;
use crate::data::{
    bicubic_resize, bicubic_resize_tensor, denormalize, load_image, normalize_batch,
    DatasetManifest, ImageU8,
};
use crate::discriminator::{discriminator_forward, DiscState};
use crate::error::{Error, Result};
use crate::generator::{generator_forward, ForwardMode, GeneratorState};
use crate::losses::{d_loss, total_generator_loss, unet_loss, PerceptualExtractor};
use crate::metrics::{full_reference_row, BrisqueModel, Luma, MetricReport};
use crate::tensor::{AdamParams, SeededRng, Tensor};
use crate::unet::{unet_forward, UNetState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Gan,
    Unet,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub stage: Stage,
    pub batch_size: usize,
    pub lr: f32,
    pub steps: usize,
    pub label_smooth: f32,
    pub seed: u64,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    pub non_saturating_adv: bool,
}

impl TrainConfig {
    /// Full-scale settings: batch 50, lr 1e-4, 50 epochs (steps are derived
    /// from the dataset size by the caller).
    pub fn paper(stage: Stage) -> Self {
        TrainConfig {
            stage,
            batch_size: 50,
            lr: 1e-4,
            steps: 0,
            label_smooth: 0.9,
            seed: 0,
            eval_every: 0,
            checkpoint_every: 0,
            non_saturating_adv: false,
        }
    }

    /// CPU-scale overfit settings.
    pub fn desk(stage: Stage) -> Self {
        TrainConfig {
            stage,
            batch_size: 8,
            lr: 2e-3,
            steps: 2000,
            label_smooth: 0.9,
            seed: 0,
            eval_every: 0,
            checkpoint_every: 0,
            non_saturating_adv: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// One training batch: LR inputs, HR targets and the attribute vectors.
pub struct Batch {
    pub lr: Tensor,
    pub hr: Tensor,
    pub atts: Vec<AttributeVector>,
}

/// Per-step report of the adversarial stage. The generator total recomposes
/// exactly as 0.003 * adv + percep + mae.
#[derive(Debug, Clone, Copy)]
pub struct GanStepReport {
    pub step: u64,
    pub loss_d: f32,
    pub loss_g: f32,
    pub adv: f32,
    pub percep: f32,
    pub mae: f32,
    pub d_hr_mean: f32,
    pub d_sr_mean: f32,
    /// Probabilities clamped into [eps, 1-eps] across both losses this step.
    pub clamped: usize,
}

fn check_finite(component: &str, value: f32) -> Result<f32> {
    if !value.is_finite() {
        return Err(Error::NonFinite {
            component: component.to_string(),
            detail: format!("value {value}; step aborted before the update"),
        });
    }
    Ok(value)
}

fn mean_of(t: &Tensor) -> f32 {
    t.data().iter().sum::<f32>() / t.len().max(1) as f32
}

/// One discriminator update (real target smoothed to `label_smooth`) followed
/// by one generator update on the weighted stage-1 objective. Gradients are
/// cleared after each update.
pub fn train_gan_step(
    batch: &Batch,
    gen: &mut GeneratorState,
    disc: &mut DiscState,
    extractor: &PerceptualExtractor,
    cfg: &TrainConfig,
) -> Result<GanStepReport> {
    cfg.validate()?;
    if gen.config.hr_side != disc.config.input_side {
        return Err(Error::Config(format!(
            "generator hr_side {} != discriminator input side {}",
            gen.config.hr_side, disc.config.input_side
        )));
    }
    let att_batch = AttributeVector::batch(&batch.atts);

    // Generator forward once; the detached copy feeds the D update. The
    // attention maps are dropped immediately so they do not pin the graph
    // past the optimizer updates.
    let (sr, maps) = generator_forward(&batch.lr, &batch.atts, gen, ForwardMode::Train)?;
    drop(maps);
    let sr_detached = sr.detach();

    // Discriminator update.
    let d_hr = discriminator_forward(&batch.hr, &att_batch, disc)?;
    let d_sr_det = discriminator_forward(&sr_detached, &att_batch, disc)?;
    let d_hr_mean = mean_of(&d_hr);
    let (l_d, clamped_d) = d_loss(&d_hr, &d_sr_det, cfg.label_smooth)?;
    let loss_d = check_finite("d_loss", l_d.item()?)?;
    l_d.backward()?;
    drop((l_d, d_hr, d_sr_det, sr_detached));
    disc.store.adam_step(AdamParams::with_lr(cfg.lr))?;
    disc.store.clear_grads();

    // Generator update; gradients flow through the freshly updated
    // discriminator but only the generator steps.
    let d_sr = discriminator_forward(&sr, &att_batch, disc)?;
    let d_sr_mean = mean_of(&d_sr);
    let parts = total_generator_loss(&batch.hr, &sr, &d_sr, extractor)?;
    let (adv, percep, mae) = (parts.adv, parts.percep, parts.mae);
    check_finite("g_adv_loss", adv)?;
    check_finite("perceptual_loss", percep)?;
    check_finite("mae_loss", mae)?;
    let loss_g = check_finite("total_generator_loss", parts.total.item()?)?;
    parts.total.backward()?;
    let clamped = clamped_d + parts.clamped;
    drop((parts, d_sr, sr));
    gen.store.adam_step(AdamParams::with_lr(cfg.lr))?;
    gen.store.clear_grads();
    // The generator backward deposited gradients into discriminator
    // parameters too; they must not leak into the next D update.
    disc.store.clear_grads();

    Ok(GanStepReport {
        step: gen.store.step(),
        loss_d,
        loss_g,
        adv,
        percep,
        mae,
        d_hr_mean,
        d_sr_mean,
        clamped,
    })
}

/// Stage-2 batch with the frozen generator's outputs already prepared.
pub struct UNetBatch {
    pub sr_aga: Tensor,
    pub bicubic: Tensor,
    pub hr: Tensor,
}

/// Runs the frozen generator in eval mode and assembles the refiner inputs
/// (SR prediction plus bicubic upsampling of the LR input).
pub fn prepare_unet_batch(batch: &Batch, gen: &GeneratorState) -> Result<UNetBatch> {
    let (sr, _) = generator_forward(&batch.lr, &batch.atts, gen, ForwardMode::Eval)?;
    let bicubic = bicubic_resize_tensor(&batch.lr, gen.config.hr_side)?;
    Ok(UNetBatch {
        sr_aga: sr,
        bicubic,
        hr: batch.hr.clone(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct UNetStepReport {
    pub step: u64,
    pub loss: f32,
    pub percep: f32,
    pub mse: f32,
}

/// One refiner update on perceptual + MSE loss. The generator is not touched.
pub fn train_unet_step(
    batch: &Batch,
    gen: &GeneratorState,
    unet: &mut UNetState,
    extractor: &PerceptualExtractor,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<UNetStepReport> {
    let prepared = prepare_unet_batch(batch, gen)?;
    train_unet_step_prepared(&prepared, unet, extractor, cfg, rng)
}

/// Refiner update on pre-computed generator outputs (the generator is frozen,
/// so its outputs can be cached across steps).
pub fn train_unet_step_prepared(
    batch: &UNetBatch,
    unet: &mut UNetState,
    extractor: &PerceptualExtractor,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<UNetStepReport> {
    cfg.validate()?;
    let out = unet_forward(&batch.sr_aga, &batch.bicubic, unet, ForwardMode::Train, rng)?;
    let parts = unet_loss(&batch.hr, &out, extractor)?;
    let loss = check_finite("unet_loss", parts.total.item()?)?;
    let (percep, mse) = (parts.percep, parts.mse);
    parts.total.backward()?;
    drop((parts, out));
    unet.store.adam_step(AdamParams::with_lr(cfg.lr))?;
    unet.store.clear_grads();
    Ok(UNetStepReport {
        step: unet.store.step(),
        loss,
        percep,
        mse,
    })
}

/// Evaluation rows for the generator output, the refined output (when a
/// refiner is given) and the bicubic baseline.
pub struct EvalReport {
    pub aga: MetricReport,
    pub unet: Option<MetricReport>,
    pub bicubic: MetricReport,
}

/// Evaluates in-memory HR images: degrades each to LR, super-resolves, and
/// runs the six-metric battery against the original.
pub fn evaluate_images(
    hr_images: &[ImageU8],
    atts: &[AttributeVector],
    gen: &GeneratorState,
    unet: Option<&UNetState>,
    brisque: Option<&BrisqueModel>,
) -> Result<EvalReport> {
    if hr_images.is_empty() {
        return Err(Error::Data("evaluation split is empty".into()));
    }
    if hr_images.len() != atts.len() {
        return Err(Error::Data(format!(
            "{} images but {} attribute vectors",
            hr_images.len(),
            atts.len()
        )));
    }
    let lr_side = gen.config.lr_side();
    let mut aga_rows = Vec::new();
    let mut unet_rows = Vec::new();
    let mut bicubic_rows = Vec::new();
    let mut eval_rng = SeededRng::new(0);
    for (img, att) in hr_images.iter().zip(atts) {
        let reference = Luma::from_image(img);
        let lr_img = bicubic_resize(img, lr_side)?;
        let lr = normalize_batch(std::slice::from_ref(&lr_img))?;

        let (sr, _) = generator_forward(&lr, std::slice::from_ref(att), gen, ForwardMode::Eval)?;
        let sr_img = denormalize(&sr)?.remove(0);
        aga_rows.push(full_reference_row(
            &reference,
            &Luma::from_image(&sr_img),
            brisque,
        )?);

        let up = bicubic_resize(&lr_img, gen.config.hr_side)?;
        bicubic_rows.push(full_reference_row(
            &reference,
            &Luma::from_image(&up),
            brisque,
        )?);

        if let Some(u) = unet {
            let bicubic_t = bicubic_resize_tensor(&lr, gen.config.hr_side)?;
            let refined = unet_forward(&sr, &bicubic_t, u, ForwardMode::Eval, &mut eval_rng)?;
            let refined_img = denormalize(&refined)?.remove(0);
            unet_rows.push(full_reference_row(
                &reference,
                &Luma::from_image(&refined_img),
                brisque,
            )?);
        }
    }
    Ok(EvalReport {
        aga: MetricReport::from_rows(aga_rows),
        unet: if unet.is_some() {
            Some(MetricReport::from_rows(unet_rows))
        } else {
            None
        },
        bicubic: MetricReport::from_rows(bicubic_rows),
    })
}

/// Evaluates every record of a manifest split from disk.
pub fn evaluate_split(
    manifest: &DatasetManifest,
    gen: &GeneratorState,
    unet: Option<&UNetState>,
    brisque: Option<&BrisqueModel>,
) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::Data("evaluation split is empty".into()));
    }
    let mut images = Vec::with_capacity(manifest.len());
    let mut atts = Vec::with_capacity(manifest.len());
    for rec in &manifest.records {
        images.push(load_image(&manifest.image_path(rec))?);
        atts.push(rec.attrs.clone());
    }
    evaluate_images(&images, &atts, gen, unet, brisque)
}

/// Loads a manifest's images and assembles full-set tensors (HR, LR and
/// attributes), the working form for desk-scale training.
pub fn load_training_set(manifest: &DatasetManifest) -> Result<(Tensor, Tensor, Vec<AttributeVector>)> {
    if manifest.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let lr_side = manifest.hr_side / manifest.scale;
    let mut hr_imgs = Vec::with_capacity(manifest.len());
    let mut lr_imgs = Vec::with_capacity(manifest.len());
    let mut atts = Vec::with_capacity(manifest.len());
    for rec in &manifest.records {
        let hr = load_image(&manifest.image_path(rec))?;
        lr_imgs.push(bicubic_resize(&hr, lr_side)?);
        hr_imgs.push(hr);
        atts.push(rec.attrs.clone());
    }
    Ok((normalize_batch(&hr_imgs)?, normalize_batch(&lr_imgs)?, atts))
}

/// Writes the per-step CSV training log header.
pub fn gan_log_header() -> &'static str {
    "step,L_D,L_adv,L_percep,L_mae,D(HR),D(SR)"
}

pub fn gan_log_row(r: &GanStepReport) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.step, r.loss_d, r.adv, r.percep, r.mae, r.d_hr_mean, r.d_sr_mean
    )
}

/// Saves a stage checkpoint; stage 1 carries generator + discriminator,
/// stage 2 additionally the refiner.
pub fn save_stage_checkpoint(
    path: &Path,
    gen: &GeneratorState,
    disc: Option<&DiscState>,
    unet: Option<&UNetState>,
    rng: &SeededRng,
    stage: Stage,
) -> Result<()> {
    let extra = vec![(
        "stage".to_string(),
        match stage {
            Stage::Gan => "1".to_string(),
            Stage::Unet => "2".to_string(),
        },
    )];
    checkpoint_save(path, Some(gen), disc, unet, rng, &extra)
}
