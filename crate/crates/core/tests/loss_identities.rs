//! Loss identities from the training objectives: exact recomposition of the
//! weighted totals, one-sided smoothing, sign/direction checks, and the
//! perceptual distance axioms.

use agasr_core::losses::{
    d_loss, g_adv_loss, g_adv_loss_non_saturating, mae_loss, mse_loss, perceptual_loss,
    total_generator_loss, unet_loss, PerceptualExtractor, ADV_WEIGHT,
};
use agasr_core::tensor::{add, SeededRng, Tensor};

fn rand_tensor(rng: &mut SeededRng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

#[test]
fn mae_and_mse_basic_laws() {
    let mut rng = SeededRng::new(1);
    let p = rand_tensor(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
    assert_eq!(mae_loss(&p, &p).unwrap().item().unwrap(), 0.0);
    assert_eq!(mse_loss(&p, &p).unwrap().item().unwrap(), 0.0);

    // Constant offset: mae = |c|, mse = c^2.
    let c = 0.25f32;
    let q = add(&p, &Tensor::scalar(c)).unwrap();
    assert!((mae_loss(&p, &q).unwrap().item().unwrap() - c).abs() < 1e-6);
    assert!((mse_loss(&p, &q).unwrap().item().unwrap() - c * c).abs() < 1e-6);

    // Loop oracle and symmetry.
    let q = rand_tensor(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
    let mut mae = 0.0f64;
    let mut mse = 0.0f64;
    for (a, b) in p.data().iter().zip(q.data()) {
        mae += (*a as f64 - *b as f64).abs();
        mse += (*a as f64 - *b as f64).powi(2);
    }
    mae /= p.len() as f64;
    mse /= p.len() as f64;
    assert!((mae_loss(&p, &q).unwrap().item().unwrap() as f64 - mae).abs() < 1e-7);
    assert!((mse_loss(&p, &q).unwrap().item().unwrap() as f64 - mse).abs() < 1e-7);
    assert_eq!(
        mae_loss(&p, &q).unwrap().item().unwrap(),
        mae_loss(&q, &p).unwrap().item().unwrap()
    );

    let bad = Tensor::zeros(vec![2, 3, 4, 5]);
    assert!(mae_loss(&p, &bad).is_err());
}

#[test]
fn d_loss_stated_values_and_smoothing() {
    // d_hr = 0.9, d_sr -> 0: loss ~= 0.9 * (-ln 0.9).
    let d_hr = Tensor::new(vec![1], vec![0.9]).unwrap();
    let d_sr = Tensor::new(vec![1], vec![1e-7]).unwrap();
    let (loss, _) = d_loss(&d_hr, &d_sr, 0.9).unwrap();
    let want = 0.9 * -(0.9f64.ln());
    assert!(
        (loss.item().unwrap() as f64 - want).abs() < 1e-4,
        "got {} want {want}",
        loss.item().unwrap()
    );

    // Saturated fake probability: the -ln(1 - d_sr) term blows up to the
    // clamp ceiling -ln(eps).
    let d_sr_bad = Tensor::new(vec![1], vec![1.0]).unwrap();
    let (loss, clamped) = d_loss(&d_hr, &d_sr_bad, 0.9).unwrap();
    assert!(loss.item().unwrap() > 15.0);
    assert_eq!(clamped, 1);

    // One-sided smoothing: with d_hr fixed, the fake term must not depend on
    // the smoothing constant. Compare the fake contribution across smooth
    // values by subtracting the real term analytically.
    let mut rng = SeededRng::new(2);
    let d_hr = rand_tensor(&mut rng, &[8], 0.2, 0.8);
    let d_sr = rand_tensor(&mut rng, &[8], 0.2, 0.8);
    let real_term = |s: f64| -> f64 {
        d_hr.data()
            .iter()
            .map(|v| -s * (*v as f64).ln())
            .sum::<f64>()
            / 8.0
    };
    let (l1, _) = d_loss(&d_hr, &d_sr, 0.9).unwrap();
    let (l2, _) = d_loss(&d_hr, &d_sr, 0.5).unwrap();
    let fake1 = l1.item().unwrap() as f64 - real_term(0.9);
    let fake2 = l2.item().unwrap() as f64 - real_term(0.5);
    assert!(
        (fake1 - fake2).abs() < 1e-6,
        "fake term depends on smoothing: {fake1} vs {fake2}"
    );
}

#[test]
fn d_loss_gradient_directions() {
    // The discriminator wants d_hr up and d_sr down: dL/d(d_hr) < 0 and
    // dL/d(d_sr) > 0. Checked analytically and by finite differences.
    let d_hr = Tensor::var(vec![2], vec![0.6, 0.4]).unwrap();
    let d_sr = Tensor::var(vec![2], vec![0.3, 0.7]).unwrap();
    let (loss, _) = d_loss(&d_hr, &d_sr, 0.9).unwrap();
    loss.backward().unwrap();
    assert!(d_hr.grad().unwrap().iter().all(|g| *g < 0.0));
    assert!(d_sr.grad().unwrap().iter().all(|g| *g > 0.0));

    let eps = 1e-3f32;
    let probe = |h: f32, s: f32| -> f32 {
        let dh = Tensor::new(vec![1], vec![h]).unwrap();
        let ds = Tensor::new(vec![1], vec![s]).unwrap();
        d_loss(&dh, &ds, 0.9).unwrap().0.item().unwrap()
    };
    assert!(probe(0.6 + eps, 0.3) < probe(0.6 - eps, 0.3));
    assert!(probe(0.6, 0.3 + eps) > probe(0.6, 0.3 - eps));
}

#[test]
fn g_adv_loss_values_and_direction() {
    let half = Tensor::new(vec![1], vec![0.5]).unwrap();
    let (l, _) = g_adv_loss(&half).unwrap();
    assert!((l.item().unwrap() - 0.5f32.ln()).abs() < 1e-6);

    // d_sr -> 0 gives ln(1) = 0.
    let zero = Tensor::new(vec![1], vec![1e-7]).unwrap();
    let (l, _) = g_adv_loss(&zero).unwrap();
    assert!(l.item().unwrap().abs() < 1e-6);

    // Minimizing pushes d_sr toward 1: gradient is negative.
    let d = Tensor::var(vec![3], vec![0.2, 0.5, 0.8]).unwrap();
    let (l, _) = g_adv_loss(&d).unwrap();
    l.backward().unwrap();
    assert!(d.grad().unwrap().iter().all(|g| *g < 0.0));

    // Non-saturating variant has the same descent direction.
    let d2 = Tensor::var(vec![3], vec![0.2, 0.5, 0.8]).unwrap();
    let (l2, _) = g_adv_loss_non_saturating(&d2).unwrap();
    l2.backward().unwrap();
    assert!(d2.grad().unwrap().iter().all(|g| *g < 0.0));
}

#[test]
fn perceptual_loss_axioms() {
    let extractor = PerceptualExtractor::with_widths(7, &[4, 8, 8, 8]);
    let mut rng = SeededRng::new(3);
    let a = rand_tensor(&mut rng, &[1, 3, 32, 32], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[1, 3, 32, 32], -1.0, 1.0);

    assert_eq!(
        perceptual_loss(&a, &a, &extractor).unwrap().item().unwrap(),
        0.0
    );
    assert_eq!(
        perceptual_loss(&a, &b, &extractor).unwrap().item().unwrap(),
        perceptual_loss(&b, &a, &extractor).unwrap().item().unwrap()
    );

    // Distance decreases monotonically as sr is interpolated toward hr.
    let mut last = f32::INFINITY;
    for k in 0..=4 {
        let t = k as f32 / 4.0;
        let mix: Vec<f32> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(av, bv)| bv + t * (av - bv))
            .collect();
        let mixed = Tensor::new(vec![1, 3, 32, 32], mix).unwrap();
        let d = perceptual_loss(&a, &mixed, &extractor).unwrap().item().unwrap();
        assert!(
            d < last + 1e-6,
            "distance not decreasing at t={t}: {d} vs {last}"
        );
        last = d;
    }
    assert!(last.abs() < 1e-9);

    // Deterministic per seed.
    let again = PerceptualExtractor::with_widths(7, &[4, 8, 8, 8]);
    assert_eq!(
        perceptual_loss(&a, &b, &extractor).unwrap().item().unwrap(),
        perceptual_loss(&a, &b, &again).unwrap().item().unwrap()
    );
}

#[test]
fn total_generator_loss_recomposes_exactly() {
    let extractor = PerceptualExtractor::with_widths(8, &[4, 8, 8, 8]);
    let mut rng = SeededRng::new(4);
    let hr = rand_tensor(&mut rng, &[2, 3, 32, 32], -0.9, 0.9);
    let sr = rand_tensor(&mut rng, &[2, 3, 32, 32], -0.9, 0.9);
    let d_sr = rand_tensor(&mut rng, &[2, 1], 0.2, 0.8);

    let parts = total_generator_loss(&hr, &sr, &d_sr, &extractor).unwrap();
    let recomposed = ADV_WEIGHT * parts.adv + parts.percep + parts.mae;
    assert!(
        (parts.total.item().unwrap() - recomposed).abs() < 1e-6,
        "total {} vs recomposed {recomposed}",
        parts.total.item().unwrap()
    );

    // sr = hr and d_sr = 0.5: only the adversarial term remains.
    let half = Tensor::new(vec![2, 1], vec![0.5, 0.5]).unwrap();
    let parts = total_generator_loss(&hr, &hr, &half, &extractor).unwrap();
    let want = ADV_WEIGHT * 0.5f32.ln();
    assert!((parts.total.item().unwrap() - want).abs() < 1e-7);

    // Linearity in the adversarial component: transporting d_sr changes the
    // total by exactly 0.003 * delta(adv).
    let d_a = Tensor::new(vec![1, 1], vec![0.3]).unwrap();
    let d_b = Tensor::new(vec![1, 1], vec![0.6]).unwrap();
    let hr1 = rand_tensor(&mut rng, &[1, 3, 32, 32], -0.9, 0.9);
    let sr1 = rand_tensor(&mut rng, &[1, 3, 32, 32], -0.9, 0.9);
    let pa = total_generator_loss(&hr1, &sr1, &d_a, &extractor).unwrap();
    let pb = total_generator_loss(&hr1, &sr1, &d_b, &extractor).unwrap();
    let lhs = pb.total.item().unwrap() - pa.total.item().unwrap();
    let rhs = ADV_WEIGHT * (pb.adv - pa.adv);
    assert!((lhs - rhs).abs() < 1e-6);
}

#[test]
fn unet_loss_composition() {
    let extractor = PerceptualExtractor::with_widths(9, &[4, 8, 8, 8]);
    let mut rng = SeededRng::new(5);
    let hr = rand_tensor(&mut rng, &[1, 3, 32, 32], -0.9, 0.9);
    let sr_u = rand_tensor(&mut rng, &[1, 3, 32, 32], -0.9, 0.9);

    let parts = unet_loss(&hr, &hr, &extractor).unwrap();
    assert_eq!(parts.total.item().unwrap(), 0.0);

    let parts = unet_loss(&hr, &sr_u, &extractor).unwrap();
    assert!(parts.total.item().unwrap() > 0.0);
    let recomposed = parts.percep + parts.mse;
    assert!((parts.total.item().unwrap() - recomposed).abs() < 1e-6);
}

#[test]
fn losses_differentiable_through_tiny_generator() {
    use agasr_core::attributes::AttributeVector;
    use agasr_core::generator::{build_generator, generator_forward, AttrFuse, ForwardMode,
        GeneratorConfig};
    use agasr_core::tensor::gradcheck_directional;

    let cfg = GeneratorConfig {
        scale: 4,
        hr_side: 32,
        main_channels: 4,
        attr_channels: 4,
        rrdb_count: 1,
        rrdb_growth: 2,
        aga_module_count: 1,
        residual_scale: 0.4,
        attr_fuse: AttrFuse::ConcatConv,
    };
    let state = build_generator(cfg, 6).unwrap();
    let extractor = PerceptualExtractor::with_widths(10, &[4, 4, 4, 4]);
    let mut rng = SeededRng::new(6);
    let hr = rand_tensor(&mut rng, &[1, 3, 32, 32], -0.9, 0.9);
    let atts = vec![AttributeVector::neutral()];

    let lr_data: Vec<f32> = (0..192).map(|_| rng.uniform(-1.0, 1.0)).collect();

    // Each objective gets the finite-difference step suited to its noise
    // profile: pixel losses tolerate larger steps, the piecewise-linear
    // perceptual features need smaller ones.
    let cases: [(&str, f32); 3] = [("mae", 1e-3), ("mse", 1e-3), ("percep", 1e-4)];
    for (kind, eps) in cases {
        let lr = Tensor::var(vec![1, 3, 8, 8], lr_data.clone()).unwrap();
        let report = gradcheck_directional(
            |ins| {
                let (sr, _) = generator_forward(&ins[0], &atts, &state, ForwardMode::Train)?;
                match kind {
                    "mae" => mae_loss(&hr, &sr),
                    "mse" => agasr_core::losses::mse_loss(&hr, &sr),
                    _ => perceptual_loss(&hr, &sr, &extractor),
                }
            },
            &[lr],
            eps,
        )
        .unwrap();
        assert!(
            report.max_rel_err < 1e-3,
            "{kind} through generator: gradcheck {}",
            report.max_rel_err
        );
    }
}
