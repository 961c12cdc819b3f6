//! Contract tests for the generator, discriminator and U-Net: shape laws,
//! compositional oracles hand-built from the primitive ops, saturation
//! identities, and gradient flow.

use agasr_core::attributes::AttributeVector;
use agasr_core::discriminator::{
    attribute_branch_forward, build_discriminator, discriminator_forward, DiscConfig,
};
use agasr_core::generator::{
    aga_module_forward, attribute_stem_forward, build_generator, deconv_upsample,
    generator_forward, main_stem_forward, AttrFuse, ForwardMode, GeneratorConfig,
};
use agasr_core::losses::{d_loss, mae_loss};
use agasr_core::nn::{relu, sigmoid, SeBlock};
use agasr_core::tensor::{
    add, concat_channels, conv2d, dense, global_avg_pool, gradcheck, gradcheck_directional,
    hadamard, mean_all, reshape, sum_all, ParamStore, SeededRng, Tensor,
};
use agasr_core::unet::{build_unet, unet_forward, DualAttention, UNetConfig};

fn tiny_gen_config() -> GeneratorConfig {
    GeneratorConfig {
        scale: 4,
        hr_side: 32,
        main_channels: 4,
        attr_channels: 4,
        rrdb_count: 1,
        rrdb_growth: 2,
        aga_module_count: 1,
        residual_scale: 0.4,
        attr_fuse: AttrFuse::ConcatConv,
    }
}

fn rand_tensor(rng: &mut SeededRng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

fn rand_attrs(rng: &mut SeededRng, n: usize) -> Vec<AttributeVector> {
    (0..n)
        .map(|_| {
            let bits: Vec<u8> = (0..38).map(|_| (rng.uniform01() < 0.5) as u8).collect();
            AttributeVector::from_bits(&bits).unwrap()
        })
        .collect()
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .fold(0.0f32, |m, (x, y)| m.max((x - y).abs()))
}

// ---------------------------------------------------------------- generator

#[test]
fn default_8x_shape_law() {
    let state = build_generator(GeneratorConfig::default_8x(), 7).unwrap();
    let mut rng = SeededRng::new(1);
    let lr = rand_tensor(&mut rng, &[1, 3, 16, 16], -1.0, 1.0);
    let atts = rand_attrs(&mut rng, 1);
    let (sr, maps) = generator_forward(&lr, &atts, &state, ForwardMode::Eval).unwrap();
    assert_eq!(sr.shape(), &[1, 3, 128, 128]);
    assert_eq!(maps.len(), 3);
    for m in &maps {
        // Three AGA modules, all at 32x32 for the 8x preset.
        assert_eq!(m.shape(), &[1, 1, 32, 32]);
        assert!(m.data().iter().all(|v| *v > 0.0 && *v < 1.0));
    }
    assert!(sr.data().iter().all(|v| *v > -1.0 && *v < 1.0));
}

#[test]
fn default_4x_shape_law() {
    let state = build_generator(GeneratorConfig::default_4x(), 7).unwrap();
    let mut rng = SeededRng::new(2);
    let lr = rand_tensor(&mut rng, &[1, 3, 32, 32], -1.0, 1.0);
    let atts = rand_attrs(&mut rng, 1);
    let (sr, maps) = generator_forward(&lr, &atts, &state, ForwardMode::Eval).unwrap();
    assert_eq!(sr.shape(), &[1, 3, 128, 128]);
    // One deconv stage for 4x; AGA runs at 64x64.
    assert_eq!(state.config.deconv_stages(), 1);
    for m in &maps {
        assert_eq!(m.shape(), &[1, 1, 64, 64]);
    }
}

#[test]
fn tiny_config_builds_and_param_count_matches_recount() {
    let state = build_generator(tiny_gen_config(), 3).unwrap();
    let mut rng = SeededRng::new(3);
    let lr = rand_tensor(&mut rng, &[2, 3, 8, 8], -1.0, 1.0);
    let atts = rand_attrs(&mut rng, 2);
    let (sr, _) = generator_forward(&lr, &atts, &state, ForwardMode::Eval).unwrap();
    assert_eq!(sr.shape(), &[2, 3, 32, 32]);

    let recount: usize = state
        .store
        .names()
        .map(|n| {
            state
                .store
                .get(n)
                .unwrap()
                .shape()
                .iter()
                .product::<usize>()
        })
        .sum();
    assert_eq!(state.param_count(), recount);
}

#[test]
fn generator_rejects_wrong_resolution_and_scale() {
    let state = build_generator(tiny_gen_config(), 3).unwrap();
    let lr = Tensor::zeros(vec![1, 3, 16, 16]);
    let atts = rand_attrs(&mut SeededRng::new(4), 1);
    assert!(generator_forward(&lr, &atts, &state, ForwardMode::Eval).is_err());

    let bad = GeneratorConfig {
        scale: 3,
        ..tiny_gen_config()
    };
    assert!(build_generator(bad, 0).is_err());
}

#[test]
fn zero_residual_scale_makes_rrdbs_identity() {
    let cfg = GeneratorConfig {
        residual_scale: 0.0,
        rrdb_count: 2,
        ..tiny_gen_config()
    };
    let state = build_generator(cfg, 5).unwrap();
    let mut rng = SeededRng::new(5);
    let lr = rand_tensor(&mut rng, &[1, 3, 8, 8], -1.0, 1.0);

    // Hand-run only the stem convs; with scale 0 the RRDB chain must be a
    // no-op on those features.
    let mut expect = lr.clone();
    for i in 0..3 {
        let w = state.store.get(&format!("gen.stem.conv{i}.w")).unwrap();
        let b = state.store.get(&format!("gen.stem.conv{i}.b")).unwrap();
        expect = relu(&conv2d(&expect, &w, &b, 1, 1).unwrap());
    }
    let got = main_stem_forward(&lr, &state).unwrap();
    assert_eq!(got.data(), expect.data());
}

#[test]
fn rrdb_matches_step_by_step_oracle() {
    let cfg = tiny_gen_config();
    let state = build_generator(cfg.clone(), 6).unwrap();
    let mut rng = SeededRng::new(6);
    let lr = rand_tensor(&mut rng, &[1, 3, 8, 8], -1.0, 1.0);

    let conv = |name: &str, x: &Tensor| -> Tensor {
        let w = state.store.get(&format!("{name}.w")).unwrap();
        let b = state.store.get(&format!("{name}.b")).unwrap();
        agasr_core::nn::lrelu(&conv2d(x, &w, &b, 1, 1).unwrap())
    };
    // Stem.
    let mut h = lr.clone();
    for i in 0..3 {
        let w = state.store.get(&format!("gen.stem.conv{i}.w")).unwrap();
        let b = state.store.get(&format!("gen.stem.conv{i}.b")).unwrap();
        h = relu(&conv2d(&h, &w, &b, 1, 1).unwrap());
    }
    // RRDB 0: three dense blocks then the scaled global residual.
    let rrdb_in = h.clone();
    let scale = Tensor::scalar(cfg.residual_scale);
    for j in 0..3 {
        let block_in = h.clone();
        let mut cat = h.clone();
        let mut last = h.clone();
        for k in 0..4 {
            last = conv(&format!("gen.rrdb0.db{j}.conv{k}"), &cat);
            if k < 3 {
                cat = concat_channels(&cat, &last).unwrap();
            }
        }
        h = add(&block_in, &hadamard(&last, &scale).unwrap()).unwrap();
    }
    let expect = add(&rrdb_in, &hadamard(&h, &scale).unwrap()).unwrap();

    let got = main_stem_forward(&lr, &state).unwrap();
    assert!(
        max_abs_diff(got.data(), expect.data()) < 1e-6,
        "rrdb composition diverges from oracle"
    );
}

#[test]
fn attribute_stem_contracts() {
    let state = build_generator(tiny_gen_config(), 8).unwrap();
    let mut rng = SeededRng::new(8);
    let lr = rand_tensor(&mut rng, &[2, 3, 8, 8], -1.0, 1.0);

    let neutral = vec![AttributeVector::neutral(), AttributeVector::neutral()];
    let out = attribute_stem_forward(&AttributeVector::batch(&neutral), &lr, &state).unwrap();
    assert_eq!(out.shape(), &[2, 4, 8, 8]);
    assert!(out.all_finite());

    // Two samples differing in a single attribute bit produce different
    // stem outputs.
    let mut a = AttributeVector::neutral();
    let mut b = AttributeVector::neutral();
    a.set(5, 0.0);
    b.set(5, 1.0);
    let lr1 = rand_tensor(&mut rng, &[1, 3, 8, 8], -1.0, 1.0);
    let oa = attribute_stem_forward(&AttributeVector::batch(&[a]), &lr1, &state).unwrap();
    let ob = attribute_stem_forward(&AttributeVector::batch(&[b]), &lr1, &state).unwrap();
    assert!(max_abs_diff(oa.data(), ob.data()) > 0.0);
}

#[test]
fn aga_module_matches_hand_composition() {
    let state = build_generator(tiny_gen_config(), 9).unwrap();
    let mut rng = SeededRng::new(9);
    let sr = rand_tensor(&mut rng, &[1, 4, 4, 4], -1.0, 1.0);
    let stem = rand_tensor(&mut rng, &[1, 4, 4, 4], -1.0, 1.0);

    let (sr2, as2, map) = aga_module_forward(&sr, &stem, &state, 0).unwrap();
    assert!(map.data().iter().all(|v| *v > 0.0 && *v < 1.0));
    assert_eq!(map.shape(), &[1, 1, 4, 4]);

    let get = |n: &str| {
        (
            state.store.get(&format!("gen.aga0.{n}.w")).unwrap(),
            state.store.get(&format!("gen.aga0.{n}.b")).unwrap(),
        )
    };
    let (m1w, m1b) = get("main1");
    let (m2w, m2b) = get("main2");
    let (a1w, a1b) = get("attr1");
    let (atw, atb) = get("att");
    let (fw, fb) = get("fuse");
    let m = conv2d(&conv2d(&sr, &m1w, &m1b, 1, 1).unwrap(), &m2w, &m2b, 1, 1).unwrap();
    let a = conv2d(&stem, &a1w, &a1b, 1, 1).unwrap();
    let want_map = sigmoid(&conv2d(&a, &atw, &atb, 1, 0).unwrap());
    let aef = hadamard(&want_map, &m).unwrap();
    let want_sr = add(&m, &aef).unwrap();
    let want_as = conv2d(&concat_channels(&a, &want_sr).unwrap(), &fw, &fb, 1, 0).unwrap();

    assert_eq!(map.data(), want_map.data());
    assert_eq!(sr2.data(), want_sr.data());
    assert_eq!(as2.data(), want_as.data());
}

#[test]
fn aga_suppressed_map_leaves_residual_path() {
    // Forcing the attention conv bias very negative drives the map to ~0,
    // so sr' collapses to m (the two stacked convs of the main stream).
    let state = {
        let mut s = build_generator(tiny_gen_config(), 10).unwrap();
        s.store.load_values("gen.aga0.att.b", &[-40.0], None, None).unwrap();
        let zeros = vec![0.0f32; s.store.get("gen.aga0.att.w").unwrap().len()];
        s.store.load_values("gen.aga0.att.w", &zeros, None, None).unwrap();
        s
    };
    let mut rng = SeededRng::new(10);
    let sr = rand_tensor(&mut rng, &[1, 4, 4, 4], -1.0, 1.0);
    let stem = rand_tensor(&mut rng, &[1, 4, 4, 4], -1.0, 1.0);
    let (sr2, _, map) = aga_module_forward(&sr, &stem, &state, 0).unwrap();
    assert!(map.data().iter().all(|v| *v < 1e-6));

    let get = |n: &str| {
        (
            state.store.get(&format!("gen.aga0.{n}.w")).unwrap(),
            state.store.get(&format!("gen.aga0.{n}.b")).unwrap(),
        )
    };
    let (m1w, m1b) = get("main1");
    let (m2w, m2b) = get("main2");
    let m = conv2d(&conv2d(&sr, &m1w, &m1b, 1, 1).unwrap(), &m2w, &m2b, 1, 1).unwrap();
    assert!(max_abs_diff(sr2.data(), m.data()) < 1e-5);
}

#[test]
fn aga_module_gradcheck() {
    let state = build_generator(tiny_gen_config(), 11).unwrap();
    let mut rng = SeededRng::new(11);
    let sr = Tensor::var(vec![1, 4, 4, 4], (0..64).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .unwrap();
    let stem = Tensor::var(vec![1, 4, 4, 4], (0..64).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .unwrap();
    let report = gradcheck(
        |ins| {
            let (sr2, as2, _) = aga_module_forward(&ins[0], &ins[1], &state, 0)?;
            let s1 = mean_all(&sr2)?;
            let s2 = mean_all(&as2)?;
            agasr_core::tensor::weighted_sum(&[(1.0, &s1), (1.0, &s2)])
        },
        &[sr, stem],
        1e-2,
    )
    .unwrap();
    assert!(
        report.max_rel_err < 1e-3,
        "aga gradcheck {:?}",
        report.per_input
    );
}

#[test]
fn deconv_stage_counts_and_ranges() {
    // 8x: features at 32x32 go through two stages to 128.
    let state = build_generator(GeneratorConfig::default_8x(), 12).unwrap();
    let mut rng = SeededRng::new(12);
    let main = rand_tensor(&mut rng, &[1, 64, 32, 32], -1.0, 1.0);
    let attr = rand_tensor(&mut rng, &[1, 32, 32, 32], -1.0, 1.0);
    let out = deconv_upsample(&main, &attr, &state).unwrap();
    assert_eq!(out.shape(), &[1, 3, 128, 128]);
    assert!(out.data().iter().all(|v| *v > -1.0 && *v < 1.0));

    // 4x: one stage, 64 -> 128.
    let state = build_generator(GeneratorConfig::default_4x(), 12).unwrap();
    let main = rand_tensor(&mut rng, &[1, 64, 64, 64], -1.0, 1.0);
    let attr = rand_tensor(&mut rng, &[1, 32, 64, 64], -1.0, 1.0);
    let out = deconv_upsample(&main, &attr, &state).unwrap();
    assert_eq!(out.shape(), &[1, 3, 128, 128]);
}

#[test]
fn generator_eval_is_deterministic_and_grads_reach_everything() {
    let state = build_generator(tiny_gen_config(), 13).unwrap();
    let mut rng = SeededRng::new(13);
    let lr = rand_tensor(&mut rng, &[2, 3, 8, 8], -1.0, 1.0);
    let atts = rand_attrs(&mut rng, 2);

    let (a, _) = generator_forward(&lr, &atts, &state, ForwardMode::Eval).unwrap();
    let (b, _) = generator_forward(&lr, &atts, &state, ForwardMode::Eval).unwrap();
    assert_eq!(a.data(), b.data());

    // Dead-path detection: an MAE loss must reach every parameter.
    let hr = rand_tensor(&mut rng, &[2, 3, 32, 32], -0.9, 0.9);
    let (sr, _) = generator_forward(&lr, &atts, &state, ForwardMode::Train).unwrap();
    let loss = mae_loss(&hr, &sr).unwrap();
    loss.backward().unwrap();
    let dead = state.store.zero_grad_params();
    assert!(dead.is_empty(), "dead parameters: {dead:?}");
}

#[test]
fn attribute_bit_flip_changes_output_after_training() {
    let mut state = build_generator(tiny_gen_config(), 14).unwrap();
    let mut rng = SeededRng::new(14);
    let lr = rand_tensor(&mut rng, &[1, 3, 8, 8], -1.0, 1.0);
    let hr = rand_tensor(&mut rng, &[1, 3, 32, 32], -0.9, 0.9);
    let atts = rand_attrs(&mut rng, 1);

    // A couple of optimization steps so the check holds on trained weights.
    for _ in 0..2 {
        let (sr, _) = generator_forward(&lr, &atts, &state, ForwardMode::Train).unwrap();
        let loss = mae_loss(&hr, &sr).unwrap();
        loss.backward().unwrap();
        drop(sr);
        drop(loss);
        state
            .store
            .adam_step(agasr_core::tensor::AdamParams::with_lr(1e-3))
            .unwrap();
        state.store.clear_grads();
    }

    let mut flipped = atts.clone();
    let old = flipped[0].values()[7];
    flipped[0].set(7, 1.0 - old);
    let (sr_a, _) = generator_forward(&lr, &atts, &state, ForwardMode::Eval).unwrap();
    let (sr_b, _) = generator_forward(&lr, &flipped, &state, ForwardMode::Eval).unwrap();
    let l1: f32 = sr_a
        .data()
        .iter()
        .zip(sr_b.data())
        .map(|(x, y)| (x - y).abs())
        .sum();
    assert!(l1 > 0.0, "attribute conditioning is degenerate");
}

#[test]
fn additive_attr_fuse_variant_runs() {
    let cfg = GeneratorConfig {
        attr_fuse: AttrFuse::Additive,
        ..tiny_gen_config()
    };
    let state = build_generator(cfg, 15).unwrap();
    let mut rng = SeededRng::new(15);
    let lr = rand_tensor(&mut rng, &[1, 3, 8, 8], -1.0, 1.0);
    let atts = rand_attrs(&mut rng, 1);
    let (sr, _) = generator_forward(&lr, &atts, &state, ForwardMode::Eval).unwrap();
    assert_eq!(sr.shape(), &[1, 3, 32, 32]);
}

// ------------------------------------------------------------ discriminator

#[test]
fn attribute_branch_shape_and_zero_law() {
    let state = build_discriminator(DiscConfig::desk(), 20).unwrap();
    let mut rng = SeededRng::new(20);
    let att = rand_tensor(&mut rng, &[3, 38], 0.0, 1.0);
    let out = attribute_branch_forward(&att, &state).unwrap();
    assert_eq!(out.shape(), &[3, 3, 32, 32]);

    // Zero attributes with the (zero-initialized) biases give a zero map.
    let zeros = Tensor::zeros(vec![2, 38]);
    let out = attribute_branch_forward(&zeros, &state).unwrap();
    assert!(out.data().iter().all(|v| *v == 0.0));
}

#[test]
fn attribute_branch_matches_index_oracle() {
    let state = build_discriminator(DiscConfig::desk(), 21).unwrap();
    let mut rng = SeededRng::new(21);
    let att = rand_tensor(&mut rng, &[2, 38], 0.0, 1.0);

    let w = state.store.get("disc.attr.embed.w").unwrap();
    let b = state.store.get("disc.attr.embed.b").unwrap();
    let flat = dense(&att, &w, &b).unwrap();
    let plane = reshape(&flat, vec![2, 3, 16, 16]).unwrap();
    let uw = state.store.get("disc.attr.up.w").unwrap();
    let ub = state.store.get("disc.attr.up.b").unwrap();
    let want =
        agasr_core::tensor::pixel_shuffle(&conv2d(&plane, &uw, &ub, 1, 1).unwrap(), 2).unwrap();

    let got = attribute_branch_forward(&att, &state).unwrap();
    assert_eq!(got.data(), want.data());
}

#[test]
fn discriminator_output_and_stage_trace() {
    let state = build_discriminator(DiscConfig::desk(), 22).unwrap();
    let mut rng = SeededRng::new(22);
    let img = rand_tensor(&mut rng, &[2, 3, 128, 128], -1.0, 1.0);
    let att = rand_tensor(&mut rng, &[2, 38], 0.0, 1.0);
    let p = discriminator_forward(&img, &att, &state).unwrap();
    assert_eq!(p.shape(), &[2, 1]);
    assert!(p.data().iter().all(|v| *v > 0.0 && *v < 1.0));

    // Stage trace 128 -> 64 -> 32 -> (concat) -> 16 -> 8 by hand-running the
    // conv units.
    let unit = |name: &str, x: &Tensor| {
        let aw = state.store.get(&format!("{name}.a.w")).unwrap();
        let ab = state.store.get(&format!("{name}.a.b")).unwrap();
        let bw = state.store.get(&format!("{name}.b.w")).unwrap();
        let bb = state.store.get(&format!("{name}.b.b")).unwrap();
        let h = agasr_core::nn::lrelu(&conv2d(x, &aw, &ab, 1, 1).unwrap());
        agasr_core::nn::lrelu(&conv2d(&h, &bw, &bb, 2, 1).unwrap())
    };
    let h1 = unit("disc.unit1", &img);
    assert_eq!(&h1.shape()[2..], &[64, 64]);
    let h2 = unit("disc.unit2", &h1);
    assert_eq!(&h2.shape()[2..], &[32, 32]);
    let attr = attribute_branch_forward(&att, &state).unwrap();
    assert_eq!(&attr.shape()[2..], &[32, 32]);
    let joined = concat_channels(&h2, &attr).unwrap();
    let h3 = unit("disc.unit3", &joined);
    assert_eq!(&h3.shape()[2..], &[16, 16]);
    let h4 = unit("disc.unit4", &h3);
    assert_eq!(&h4.shape()[2..], &[8, 8]);

    let mismatched = rand_tensor(&mut rng, &[1, 3, 64, 64], -1.0, 1.0);
    let one_att = rand_tensor(&mut rng, &[1, 38], 0.0, 1.0);
    assert!(discriminator_forward(&mismatched, &one_att, &state).is_err());
}

#[test]
fn discriminator_attribute_sensitivity_and_grad_flow() {
    let state = build_discriminator(DiscConfig::desk(), 23).unwrap();
    let mut rng = SeededRng::new(23);
    let img = rand_tensor(&mut rng, &[1, 3, 128, 128], -1.0, 1.0);
    let att_a = rand_tensor(&mut rng, &[1, 38], 0.0, 1.0);
    let mut att_b_data = att_a.data().to_vec();
    att_b_data[4] = 1.0 - att_b_data[4];
    let att_b = Tensor::new(vec![1, 38], att_b_data).unwrap();

    let pa = discriminator_forward(&img, &att_a, &state).unwrap();
    let pb = discriminator_forward(&img, &att_b, &state).unwrap();
    assert_ne!(pa.data()[0], pb.data()[0], "attribute-insensitive output");

    // The adversarial loss reaches every discriminator parameter.
    let d_hr = discriminator_forward(&img, &att_a, &state).unwrap();
    let img2 = rand_tensor(&mut rng, &[1, 3, 128, 128], -1.0, 1.0);
    let d_sr = discriminator_forward(&img2, &att_a, &state).unwrap();
    let (loss, _) = d_loss(&d_hr, &d_sr, 0.9).unwrap();
    loss.backward().unwrap();
    let dead = state.store.zero_grad_params();
    assert!(dead.is_empty(), "dead parameters: {dead:?}");
}

#[test]
fn discriminator_gradcheck_small_input() {
    let cfg = DiscConfig {
        input_side: 32,
        base_channels: 4,
        stage_growth: 2,
        attr_embed_side: 4,
    };
    let state = build_discriminator(cfg, 24).unwrap();
    let mut rng = SeededRng::new(24);
    let img = Tensor::var(
        vec![1, 3, 32, 32],
        (0..3 * 32 * 32).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    )
    .unwrap();
    let att = Tensor::var(vec![1, 38], (0..38).map(|_| rng.uniform01()).collect()).unwrap();
    let report = gradcheck_directional(
        |ins| sum_all(&discriminator_forward(&ins[0], &ins[1], &state)?),
        &[img, att],
        3e-3,
    )
    .unwrap();
    assert!(
        report.max_rel_err < 1e-3,
        "disc gradcheck {:?}",
        report.per_input
    );
}

// ------------------------------------------------------------------- U-Net

#[test]
fn se_block_contracts() {
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(30);
    let se = SeBlock::new("se", 8, 4).unwrap();
    se.register(&mut store, &mut rng).unwrap();
    let x = rand_tensor(&mut rng, &[2, 8, 4, 4], -1.0, 1.0);

    let scales = se.scales(&store, &x).unwrap();
    assert_eq!(scales.shape(), &[2, 8, 1, 1]);
    assert!(scales.data().iter().all(|v| *v > 0.0 && *v < 1.0));

    // Output equals x scaled per channel (loop oracle).
    let out = se.forward(&store, &x).unwrap();
    for n in 0..2 {
        for c in 0..8 {
            for i in 0..16 {
                let want = x.data()[(n * 8 + c) * 16 + i] * scales.data()[n * 8 + c];
                assert_eq!(out.data()[(n * 8 + c) * 16 + i], want);
            }
        }
    }
    drop(scales);
    drop(out);

    // Saturated excitation (huge positive bias) makes the block ~identity.
    store
        .load_values("se.excite.b", &[40.0; 8], None, None)
        .unwrap();
    let out = se.forward(&store, &x).unwrap();
    assert!(max_abs_diff(out.data(), x.data()) < 1e-5);

    assert!(SeBlock::new("bad", 6, 4).is_err());
}

#[test]
fn dual_attention_saturation_identities() {
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(31);
    let da = DualAttention::new("da", 4, 2).unwrap();
    da.register(&mut store, &mut rng).unwrap();
    let x = rand_tensor(&mut rng, &[1, 4, 4, 4], -1.0, 1.0);
    let x_se = da.se.forward(&store, &x).unwrap();

    // Spatial map forced to ~0: output collapses to X_se (the sigmoid range
    // clamp leaves a 1e-7 floor on the gate).
    let zeros = vec![0.0f32; store.get("da.spatial.w").unwrap().len()];
    drop(x_se);
    store.load_values("da.spatial.w", &zeros, None, None).unwrap();
    store.load_values("da.spatial.b", &[-40.0], None, None).unwrap();
    let x_se = da.se.forward(&store, &x).unwrap();
    let out = da.forward(&store, &x).unwrap();
    assert!(max_abs_diff(out.data(), x_se.data()) < 1e-6);

    // Spatial map saturated to ~1: output is 2 * X_se.
    let want: Vec<f32> = x_se.data().iter().map(|v| 2.0 * v).collect();
    drop(x_se);
    drop(out);
    store.load_values("da.spatial.b", &[40.0], None, None).unwrap();
    let out = da.forward(&store, &x).unwrap();
    assert!(max_abs_diff(out.data(), &want) < 1e-6);
}

#[test]
fn dual_attention_matches_hand_composition_and_gradcheck() {
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(32);
    let da = DualAttention::new("da", 2, 2).unwrap();
    da.register(&mut store, &mut rng).unwrap();
    let x = rand_tensor(&mut rng, &[1, 2, 2, 2], -1.0, 1.0);

    // Step-by-step oracle on the toy input.
    let pooled = reshape(&global_avg_pool(&x).unwrap(), vec![1, 2]).unwrap();
    let sw = store.get("da.se.squeeze.w").unwrap();
    let sb = store.get("da.se.squeeze.b").unwrap();
    let ew = store.get("da.se.excite.w").unwrap();
    let eb = store.get("da.se.excite.b").unwrap();
    let hidden = relu(&dense(&pooled, &sw, &sb).unwrap());
    let gates = sigmoid(&dense(&hidden, &ew, &eb).unwrap());
    let x_se = hadamard(&x, &reshape(&gates, vec![1, 2, 1, 1]).unwrap()).unwrap();
    let pw = store.get("da.spatial.w").unwrap();
    let pb = store.get("da.spatial.b").unwrap();
    let s = sigmoid(&conv2d(&x, &pw, &pb, 1, 0).unwrap());
    let want = hadamard(&add(&s, &Tensor::scalar(1.0)).unwrap(), &x_se).unwrap();

    let got = da.forward(&store, &x).unwrap();
    assert_eq!(got.data(), want.data());

    let xv = x.detach_var();
    let report = gradcheck(|ins| mean_all(&da.forward(&store, &ins[0])?), &[xv], 1e-2).unwrap();
    assert!(
        report.max_rel_err < 1e-3,
        "dual attention gradcheck {}",
        report.max_rel_err
    );
}

#[test]
fn unet_shape_range_and_determinism() {
    let state = build_unet(UNetConfig::desk(), 40).unwrap();
    let mut rng = SeededRng::new(40);
    let sr = rand_tensor(&mut rng, &[1, 3, 128, 128], -1.0, 1.0);
    let bic = rand_tensor(&mut rng, &[1, 3, 128, 128], -1.0, 1.0);

    let mut r1 = SeededRng::new(1);
    let out = unet_forward(&sr, &bic, &state, ForwardMode::Eval, &mut r1).unwrap();
    assert_eq!(out.shape(), &[1, 3, 128, 128]);
    assert!(out.data().iter().all(|v| *v > -1.0 && *v < 1.0));

    let mut r2 = SeededRng::new(999);
    let out2 = unet_forward(&sr, &bic, &state, ForwardMode::Eval, &mut r2).unwrap();
    assert_eq!(out.data(), out2.data(), "eval forward not deterministic");

    let bad = rand_tensor(&mut rng, &[1, 3, 64, 64], -1.0, 1.0);
    assert!(unet_forward(&bad, &bic, &state, ForwardMode::Eval, &mut r1).is_err());

    assert!(UNetConfig {
        input_side: 100,
        ..UNetConfig::desk()
    }
    .validate()
    .is_err());
}

#[test]
fn unet_grads_reach_everything() {
    let cfg = UNetConfig {
        depth: 2,
        base_channels: 8,
        channel_cap: 32,
        dropout_p: 0.0,
        se_reduction: 2,
        input_side: 16,
    };
    let state = build_unet(cfg, 41).unwrap();
    let mut rng = SeededRng::new(41);
    let sr = rand_tensor(&mut rng, &[2, 3, 16, 16], -1.0, 1.0);
    let bic = rand_tensor(&mut rng, &[2, 3, 16, 16], -1.0, 1.0);
    let hr = rand_tensor(&mut rng, &[2, 3, 16, 16], -0.9, 0.9);
    let mut r = SeededRng::new(1);
    let out = unet_forward(&sr, &bic, &state, ForwardMode::Train, &mut r).unwrap();
    let loss = mae_loss(&hr, &out).unwrap();
    loss.backward().unwrap();
    let dead = state.store.zero_grad_params();
    assert!(dead.is_empty(), "dead parameters: {dead:?}");
}
