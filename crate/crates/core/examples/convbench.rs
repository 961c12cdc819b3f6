use agasr_core::data::{synth_faces, AttrKind, SynthAttr, SynthSpec};
use agasr_core::discriminator::{build_discriminator, DiscConfig};
use agasr_core::generator::{build_generator, GeneratorConfig};
use agasr_core::losses::PerceptualExtractor;
use agasr_core::trainer::*;
use agasr_core::data::normalize_batch;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let lr: f32 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2e-3);

    let mut attrs: Vec<SynthAttr> = AttrKind::ALL.iter().map(|k| SynthAttr { kind: *k, prob: 0.5 }).collect();
    attrs.iter_mut().find(|a| a.kind == AttrKind::Eyeglasses).unwrap().prob = 1.0;
    let spec = SynthSpec { seed: 77, count: 8, side: 128, attrs };
    let faces = synth_faces(&spec).unwrap();
    let hr_imgs: Vec<_> = faces.iter().map(|f| f.image.clone()).collect();
    let atts: Vec<_> = faces.iter().map(|f| f.attrs.clone()).collect();

    let lr_imgs: Vec<_> = hr_imgs.iter().map(|i| agasr_core::data::bicubic_resize(i, 32).unwrap()).collect();
    let batch = Batch {
        lr: normalize_batch(&lr_imgs).unwrap(),
        hr: normalize_batch(&hr_imgs).unwrap(),
        atts: atts.clone(),
    };

    let mut gen = build_generator(GeneratorConfig::desk_4x(), 100).unwrap();
    let mut disc = build_discriminator(DiscConfig::desk(), 101).unwrap();
    let extractor = PerceptualExtractor::with_widths(102, &[8, 16, 32, 64]);
    let cfg = TrainConfig { lr, ..TrainConfig::desk(Stage::Gan) };

    // Bicubic baseline PSNR.
    let report = evaluate_images(&hr_imgs, &atts, &gen, None, None).unwrap();
    println!("bicubic PSNR = {:.3} dB | init SR PSNR = {:.3}", report.bicubic.mean.psnr, report.aga.mean.psnr);

    let t0 = Instant::now();
    for step in 1..=steps {
        let r = train_gan_step(&batch, &mut gen, &mut disc, &extractor, &cfg).unwrap();
        if step % 50 == 0 || step == steps {
            let ev = evaluate_images(&hr_imgs, &atts, &gen, None, None).unwrap();
            println!(
                "step {step:5} | L_G {:.4} mae {:.4} adv {:.3} | D(hr) {:.3} D(sr) {:.3} | PSNR {:.3} | {:.1}s ({:.0} ms/step)",
                r.loss_g, r.mae, r.adv, r.d_hr_mean, r.d_sr_mean,
                ev.aga.mean.psnr,
                t0.elapsed().as_secs_f64(),
                t0.elapsed().as_secs_f64() * 1e3 / step as f64
            );
        }
    }
}
