//! Two-stream attribute-guided attention generator.
//!
//! The main stream lifts the LR image through a conv stem and
//! residual-in-residual dense blocks; the attribute stream embeds the
//! 38-entry attribute vector into image space and fuses it with LR features.
//! Both streams are sub-pixel upsampled x2, pass through a chain of
//! attribute-guided attention modules that gate main-stream features with a
//! sigmoid spatial map derived from the attribute stream, and finish in a
//! de-convolution subnetwork that upsamples to the target resolution
//! (two x2 stages for 8x, one for 4x) with a tanh head.

use crate::attributes::{AttributeVector, ATTR_COUNT};
use crate::error::{Error, Result};
use crate::nn::{lrelu, relu, sigmoid, tanh, Conv2dLayer, DenseLayer, Init, SubPixelUp};
use crate::tensor::{
    add, concat_channels, hadamard, reshape, ParamStore, SeededRng, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Train,
    /// Detaches outputs so no graph is retained.
    Eval,
}

/// How an AGA module feeds the refined main stream back into the attribute
/// stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrFuse {
    /// Channel concat followed by a 1x1 conv restoring `attr_channels`.
    ConcatConv,
    /// Additive variant: 1x1-projected main features added to the stream.
    Additive,
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    /// Upscale factor, 4 or 8.
    pub scale: usize,
    /// Output (HR) side; LR side is hr_side / scale.
    pub hr_side: usize,
    pub main_channels: usize,
    pub attr_channels: usize,
    pub rrdb_count: usize,
    pub rrdb_growth: usize,
    pub aga_module_count: usize,
    pub residual_scale: f32,
    pub attr_fuse: AttrFuse,
}

impl GeneratorConfig {
    pub fn default_8x() -> Self {
        GeneratorConfig {
            scale: 8,
            hr_side: 128,
            main_channels: 64,
            attr_channels: 32,
            rrdb_count: 4,
            rrdb_growth: 32,
            aga_module_count: 3,
            residual_scale: 0.4,
            attr_fuse: AttrFuse::ConcatConv,
        }
    }

    pub fn default_4x() -> Self {
        GeneratorConfig {
            scale: 4,
            ..Self::default_8x()
        }
    }

    /// Small widths for CPU-scale experiments.
    pub fn desk_4x() -> Self {
        GeneratorConfig {
            scale: 4,
            hr_side: 128,
            main_channels: 12,
            attr_channels: 8,
            rrdb_count: 1,
            rrdb_growth: 8,
            aga_module_count: 3,
            residual_scale: 0.4,
            attr_fuse: AttrFuse::ConcatConv,
        }
    }

    pub fn lr_side(&self) -> usize {
        self.hr_side / self.scale
    }

    /// Number of x2 stages in the de-convolution subnetwork (after the
    /// initial x2 upsample shared by both streams).
    pub fn deconv_stages(&self) -> usize {
        match self.scale {
            4 => 1,
            8 => 2,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale != 4 && self.scale != 8 {
            return Err(Error::Config(format!(
                "generator scale must be 4 or 8, got {}",
                self.scale
            )));
        }
        if self.hr_side % self.scale != 0 {
            return Err(Error::Config(format!(
                "hr_side {} not divisible by scale {}",
                self.hr_side, self.scale
            )));
        }
        if self.aga_module_count == 0 {
            return Err(Error::Config("aga_module_count must be >= 1".into()));
        }
        if !(self.residual_scale > 0.0 && self.residual_scale <= 1.0)
            && self.residual_scale != 0.0
        {
            return Err(Error::Config(format!(
                "residual_scale must be in [0, 1], got {}",
                self.residual_scale
            )));
        }
        if self.main_channels == 0 || self.attr_channels == 0 || self.rrdb_growth == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        Ok(())
    }
}

/// One densely connected block: four conv+LeakyReLU layers where layer k sees
/// the block input plus all previous growth outputs; the last conv returns to
/// the block width.
struct DenseBlock {
    convs: Vec<Conv2dLayer>,
}

impl DenseBlock {
    fn new(name: &str, channels: usize, growth: usize) -> Self {
        let mut convs = Vec::new();
        for k in 0..4 {
            let in_ch = channels + k * growth;
            let out_ch = if k == 3 { channels } else { growth };
            convs.push(Conv2dLayer::same(
                format!("{name}.conv{k}"),
                in_ch,
                out_ch,
                3,
                Init::He,
            ));
        }
        DenseBlock { convs }
    }

    fn register(&self, store: &mut ParamStore, rng: &mut SeededRng) -> Result<()> {
        for c in &self.convs {
            c.register(store, rng)?;
        }
        Ok(())
    }

    fn forward(&self, store: &ParamStore, x: &Tensor, residual_scale: f32) -> Result<Tensor> {
        let mut cat = x.clone();
        let mut last = x.clone();
        for (k, conv) in self.convs.iter().enumerate() {
            last = lrelu(&conv.forward(store, &cat)?);
            if k < 3 {
                cat = concat_channels(&cat, &last)?;
            }
        }
        // Local residual: x + scale * block(x).
        let scaled = hadamard(&last, &Tensor::scalar(residual_scale))?;
        add(x, &scaled)
    }
}

/// Residual-in-residual dense block: three dense blocks plus a global
/// residual, both scaled.
struct Rrdb {
    blocks: Vec<DenseBlock>,
}

impl Rrdb {
    fn new(name: &str, channels: usize, growth: usize) -> Self {
        Rrdb {
            blocks: (0..3)
                .map(|j| DenseBlock::new(&format!("{name}.db{j}"), channels, growth))
                .collect(),
        }
    }

    fn register(&self, store: &mut ParamStore, rng: &mut SeededRng) -> Result<()> {
        for b in &self.blocks {
            b.register(store, rng)?;
        }
        Ok(())
    }

    fn forward(&self, store: &ParamStore, x: &Tensor, residual_scale: f32) -> Result<Tensor> {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.forward(store, &h, residual_scale)?;
        }
        // Global residual: x + scale * (dense-block composition).
        let scaled = hadamard(&h, &Tensor::scalar(residual_scale))?;
        add(x, &scaled)
    }
}

struct AgaModule {
    main1: Conv2dLayer,
    main2: Conv2dLayer,
    attr1: Conv2dLayer,
    att: Conv2dLayer,
    fuse: Conv2dLayer,
}

impl AgaModule {
    fn new(name: &str, main_ch: usize, attr_ch: usize, fuse_kind: AttrFuse) -> Self {
        let fuse = match fuse_kind {
            AttrFuse::ConcatConv => Conv2dLayer::same(
                format!("{name}.fuse"),
                attr_ch + main_ch,
                attr_ch,
                1,
                Init::Glorot,
            ),
            AttrFuse::Additive => {
                Conv2dLayer::same(format!("{name}.fuse"), main_ch, attr_ch, 1, Init::Glorot)
            }
        };
        AgaModule {
            main1: Conv2dLayer::same(format!("{name}.main1"), main_ch, main_ch, 3, Init::Glorot),
            main2: Conv2dLayer::same(format!("{name}.main2"), main_ch, main_ch, 3, Init::Glorot),
            attr1: Conv2dLayer::same(format!("{name}.attr1"), attr_ch, attr_ch, 3, Init::Glorot),
            att: Conv2dLayer::same(format!("{name}.att"), attr_ch, 1, 1, Init::Glorot),
            fuse,
        }
    }

    fn register(&self, store: &mut ParamStore, rng: &mut SeededRng) -> Result<()> {
        self.main1.register(store, rng)?;
        self.main2.register(store, rng)?;
        self.attr1.register(store, rng)?;
        self.att.register(store, rng)?;
        self.fuse.register(store, rng)
    }
}

struct DeconvStage {
    main_up: SubPixelUp,
    attr_up: SubPixelUp,
    fuse: Conv2dLayer,
}

struct Layers {
    stem: Vec<Conv2dLayer>,
    rrdbs: Vec<Rrdb>,
    attr_embed: DenseLayer,
    attr_lr_conv: Conv2dLayer,
    attr_fuse: Vec<Conv2dLayer>,
    main_up0: SubPixelUp,
    attr_up0: SubPixelUp,
    aga: Vec<AgaModule>,
    deconv: Vec<DeconvStage>,
    head: Conv2dLayer,
}

fn build_layers(cfg: &GeneratorConfig) -> Layers {
    let (c, a) = (cfg.main_channels, cfg.attr_channels);
    let lr = cfg.lr_side();
    let stem = vec![
        Conv2dLayer::same("gen.stem.conv0", 3, c, 3, Init::He),
        Conv2dLayer::same("gen.stem.conv1", c, c, 3, Init::He),
        Conv2dLayer::same("gen.stem.conv2", c, c, 3, Init::He),
    ];
    let rrdbs = (0..cfg.rrdb_count)
        .map(|i| Rrdb::new(&format!("gen.rrdb{i}"), c, cfg.rrdb_growth))
        .collect();
    let attr_embed = DenseLayer::new("gen.attr.embed", ATTR_COUNT, 3 * lr * lr, Init::Glorot);
    let attr_lr_conv = Conv2dLayer::same("gen.attr.lrconv", 3, a, 3, Init::He);
    let attr_fuse = vec![
        Conv2dLayer::same("gen.attr.fuse0", 3 + a, a, 3, Init::He),
        Conv2dLayer::same("gen.attr.fuse1", a, a, 3, Init::He),
    ];
    let main_up0 = SubPixelUp::new("gen.up0.main", c, 2, Init::He);
    let attr_up0 = SubPixelUp::new("gen.up0.attr", a, 2, Init::He);
    let aga = (0..cfg.aga_module_count)
        .map(|i| AgaModule::new(&format!("gen.aga{i}"), c, a, cfg.attr_fuse))
        .collect();
    let deconv = (0..cfg.deconv_stages())
        .map(|s| DeconvStage {
            main_up: SubPixelUp::new(format!("gen.dec{s}.main_up"), c, 2, Init::He),
            attr_up: SubPixelUp::new(format!("gen.dec{s}.attr_up"), a, 2, Init::He),
            fuse: Conv2dLayer::same(format!("gen.dec{s}.fuse"), c + a, c, 3, Init::He),
        })
        .collect();
    let head = Conv2dLayer::same("gen.head", c, 3, 3, Init::Glorot);
    Layers {
        stem,
        rrdbs,
        attr_embed,
        attr_lr_conv,
        attr_fuse,
        main_up0,
        attr_up0,
        aga,
        deconv,
        head,
    }
}

/// Generator parameters plus the layer map derived from its config.
pub struct GeneratorState {
    pub config: GeneratorConfig,
    pub store: ParamStore,
    pub seed: u64,
    layers: Layers,
}

/// Builds and initializes a generator. All weights come from one seeded
/// generator; biases start at zero.
pub fn build_generator(config: GeneratorConfig, seed: u64) -> Result<GeneratorState> {
    config.validate()?;
    let layers = build_layers(&config);
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    for l in &layers.stem {
        l.register(&mut store, &mut rng)?;
    }
    for r in &layers.rrdbs {
        r.register(&mut store, &mut rng)?;
    }
    layers.attr_embed.register(&mut store, &mut rng)?;
    layers.attr_lr_conv.register(&mut store, &mut rng)?;
    for l in &layers.attr_fuse {
        l.register(&mut store, &mut rng)?;
    }
    layers.main_up0.register(&mut store, &mut rng)?;
    layers.attr_up0.register(&mut store, &mut rng)?;
    for m in &layers.aga {
        m.register(&mut store, &mut rng)?;
    }
    for d in &layers.deconv {
        d.main_up.register(&mut store, &mut rng)?;
        d.attr_up.register(&mut store, &mut rng)?;
        d.fuse.register(&mut store, &mut rng)?;
    }
    layers.head.register(&mut store, &mut rng)?;
    Ok(GeneratorState {
        config,
        store,
        seed,
        layers,
    })
}

impl GeneratorState {
    /// Rebuilds the layer map for a config whose parameters will be loaded
    /// from a checkpoint.
    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }
}

/// Conv stem (three conv+ReLU layers) followed by the RRDB chain. Output has
/// `main_channels` channels at the LR resolution.
pub fn main_stem_forward(lr: &Tensor, state: &GeneratorState) -> Result<Tensor> {
    let mut h = lr.clone();
    for conv in &state.layers.stem {
        h = relu(&conv.forward(&state.store, &h)?);
    }
    for rrdb in &state.layers.rrdbs {
        h = rrdb.forward(&state.store, &h, state.config.residual_scale)?;
    }
    Ok(h)
}

/// Embeds the attribute batch into image space, joins it with LR image
/// features and fuses down to `attr_channels`.
pub fn attribute_stem_forward(
    att: &Tensor,
    lr: &Tensor,
    state: &GeneratorState,
) -> Result<Tensor> {
    let (n, f) = att.dims2()?;
    if f != ATTR_COUNT {
        return Err(Error::shape(
            "attribute_stem",
            format!("attribute batch has {f} entries per row, expected {ATTR_COUNT}"),
        ));
    }
    let side = state.config.lr_side();
    let embedded = state.layers.attr_embed.forward(&state.store, att)?;
    let plane = reshape(&embedded, vec![n, 3, side, side])?;
    let lr_feat = lrelu(&state.layers.attr_lr_conv.forward(&state.store, lr)?);
    let mut h = concat_channels(&plane, &lr_feat)?;
    for conv in &state.layers.attr_fuse {
        h = lrelu(&conv.forward(&state.store, &h)?);
    }
    Ok(h)
}

/// One attribute-guided attention module:
/// m = Conv(Conv(sr_main)); a = Conv(as_stem); map = sigmoid(Conv1x1(a));
/// aef = map (x) m; sr' = m + aef; as' = fuse(a, sr').
/// Returns (sr', as', attention map).
pub fn aga_module_forward(
    sr_main: &Tensor,
    as_stem: &Tensor,
    state: &GeneratorState,
    idx: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let module = state
        .layers
        .aga
        .get(idx)
        .ok_or_else(|| Error::Usage(format!("aga module index {idx} out of range")))?;
    let (_, _, hm, wm) = sr_main.dims4()?;
    let (_, _, ha, wa) = as_stem.dims4()?;
    if (hm, wm) != (ha, wa) {
        return Err(Error::shape(
            "aga_module",
            format!("main {hm}x{wm} vs attribute {ha}x{wa} spatial extents"),
        ));
    }
    let m = module
        .main2
        .forward(&state.store, &module.main1.forward(&state.store, sr_main)?)?;
    let a = module.attr1.forward(&state.store, as_stem)?;
    let map = sigmoid(&module.att.forward(&state.store, &a)?);
    let aef = hadamard(&map, &m)?;
    let sr_next = add(&m, &aef)?;
    let as_next = match state.config.attr_fuse {
        AttrFuse::ConcatConv => {
            let cat = concat_channels(&a, &sr_next)?;
            module.fuse.forward(&state.store, &cat)?
        }
        AttrFuse::Additive => {
            let proj = module.fuse.forward(&state.store, &sr_next)?;
            add(&a, &proj)?
        }
    };
    Ok((sr_next, as_next, map))
}

/// De-convolution subnetwork: per stage both streams are sub-pixel upsampled
/// x2 and the attribute stream is concatenated into the main stream through a
/// fuse conv; a final 3-channel conv with tanh produces the image.
pub fn deconv_upsample(
    sr_main: &Tensor,
    as_stem: &Tensor,
    state: &GeneratorState,
) -> Result<Tensor> {
    let mut main = sr_main.clone();
    let mut attr = as_stem.clone();
    for stage in &state.layers.deconv {
        main = lrelu(&stage.main_up.forward(&state.store, &main)?);
        attr = lrelu(&stage.attr_up.forward(&state.store, &attr)?);
        let cat = concat_channels(&main, &attr)?;
        main = lrelu(&stage.fuse.forward(&state.store, &cat)?);
    }
    Ok(tanh(&state.layers.head.forward(&state.store, &main)?))
}

/// Full generator pipeline. Returns the SR prediction and the attention map
/// of every AGA module (at the post-initial-upsample resolution).
pub fn generator_forward(
    lr: &Tensor,
    att: &[AttributeVector],
    state: &GeneratorState,
    mode: ForwardMode,
) -> Result<(Tensor, Vec<Tensor>)> {
    let (n, c, h, w) = lr.dims4()?;
    let side = state.config.lr_side();
    if c != 3 || h != side || w != side {
        return Err(Error::shape(
            "generator_forward",
            format!(
                "expected LR input (N, 3, {side}, {side}) for {}x scale, got {:?}",
                state.config.scale,
                lr.shape()
            ),
        ));
    }
    if att.len() != n {
        return Err(Error::shape(
            "generator_forward",
            format!("{n} images but {} attribute vectors", att.len()),
        ));
    }
    let att_batch = AttributeVector::batch(att);
    let main0 = main_stem_forward(lr, state)?;
    let attr0 = attribute_stem_forward(&att_batch, lr, state)?;
    let mut main = lrelu(&state.layers.main_up0.forward(&state.store, &main0)?);
    let mut attr = lrelu(&state.layers.attr_up0.forward(&state.store, &attr0)?);
    let mut maps = Vec::with_capacity(state.config.aga_module_count);
    for idx in 0..state.config.aga_module_count {
        let (m, a, map) = aga_module_forward(&main, &attr, state, idx)?;
        main = m;
        attr = a;
        maps.push(map);
    }
    let sr = deconv_upsample(&main, &attr, state)?;
    match mode {
        ForwardMode::Train => Ok((sr, maps)),
        ForwardMode::Eval => Ok((sr.detach(), maps.iter().map(Tensor::detach).collect())),
    }
}
