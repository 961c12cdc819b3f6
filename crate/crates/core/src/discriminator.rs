//! Attribute-conditioned discriminator: an image branch of strided conv
//! units joined at 32x32 by an embedded attribute map, reduced to a single
//! real/fake probability.

use crate::attributes::ATTR_COUNT;
use crate::error::{Error, Result};
use crate::nn::{lrelu, sigmoid, Conv2dLayer, DenseLayer, Init, SubPixelUp};
use crate::tensor::{concat_channels, reshape, ParamStore, SeededRng, Tensor};

#[derive(Debug, Clone)]
pub struct DiscConfig {
    /// Input image side; halved four times down to side/16.
    pub input_side: usize,
    pub base_channels: usize,
    /// Channel multiplier applied at every strided conv.
    pub stage_growth: usize,
    /// The attribute vector is embedded to (3, side, side) before one x2
    /// sub-pixel upsample bridges it to the 32x32 concat point.
    pub attr_embed_side: usize,
}

impl Default for DiscConfig {
    fn default() -> Self {
        DiscConfig {
            input_side: 128,
            base_channels: 32,
            stage_growth: 2,
            attr_embed_side: 16,
        }
    }
}

impl DiscConfig {
    pub fn desk() -> Self {
        DiscConfig {
            base_channels: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_side % 16 != 0 || self.input_side < 32 {
            return Err(Error::Config(format!(
                "discriminator input side {} must be divisible by 16",
                self.input_side
            )));
        }
        if self.attr_embed_side * 2 != self.input_side / 4 {
            return Err(Error::Config(format!(
                "attribute embed side {} must upsample x2 to the concat \
                 resolution {}",
                self.attr_embed_side,
                self.input_side / 4
            )));
        }
        if self.base_channels == 0 || self.stage_growth == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        Ok(())
    }

    /// Channel width after `stage` strided convs.
    fn width(&self, stage: u32) -> usize {
        self.base_channels * self.stage_growth.pow(stage)
    }
}

/// conv3x3 + LeakyReLU, then strided conv3x3 + LeakyReLU halving resolution.
struct ConvUnit {
    a: Conv2dLayer,
    b: Conv2dLayer,
}

impl ConvUnit {
    fn new(name: &str, in_ch: usize, mid_ch: usize, out_ch: usize) -> Self {
        ConvUnit {
            a: Conv2dLayer::same(format!("{name}.a"), in_ch, mid_ch, 3, Init::He),
            b: Conv2dLayer::new(format!("{name}.b"), mid_ch, out_ch, 3, 2, 1, Init::He),
        }
    }

    fn register(&self, store: &mut ParamStore, rng: &mut SeededRng) -> Result<()> {
        self.a.register(store, rng)?;
        self.b.register(store, rng)
    }

    fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let h = lrelu(&self.a.forward(store, x)?);
        Ok(lrelu(&self.b.forward(store, &h)?))
    }
}

struct Layers {
    unit1: ConvUnit,
    unit2: ConvUnit,
    attr_embed: DenseLayer,
    attr_up: SubPixelUp,
    unit3: ConvUnit,
    unit4: ConvUnit,
    head: DenseLayer,
}

pub struct DiscState {
    pub config: DiscConfig,
    pub store: ParamStore,
    pub seed: u64,
    layers: Layers,
}

pub fn build_discriminator(config: DiscConfig, seed: u64) -> Result<DiscState> {
    config.validate()?;
    let b = config.base_channels;
    let (w1, w2, w3, w4) = (
        config.width(1),
        config.width(2),
        config.width(3),
        config.width(4),
    );
    let es = config.attr_embed_side;
    let head_side = config.input_side / 16;
    let layers = Layers {
        unit1: ConvUnit::new("disc.unit1", 3, b, w1),
        unit2: ConvUnit::new("disc.unit2", w1, w1, w2),
        attr_embed: DenseLayer::new("disc.attr.embed", ATTR_COUNT, 3 * es * es, Init::Glorot),
        attr_up: SubPixelUp::new("disc.attr.up", 3, 2, Init::Glorot),
        unit3: ConvUnit::new("disc.unit3", w2 + 3, w2, w3),
        unit4: ConvUnit::new("disc.unit4", w3, w3, w4),
        head: DenseLayer::new(
            "disc.head",
            w4 * head_side * head_side,
            1,
            Init::Glorot,
        ),
    };
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    layers.unit1.register(&mut store, &mut rng)?;
    layers.unit2.register(&mut store, &mut rng)?;
    layers.attr_embed.register(&mut store, &mut rng)?;
    layers.attr_up.register(&mut store, &mut rng)?;
    layers.unit3.register(&mut store, &mut rng)?;
    layers.unit4.register(&mut store, &mut rng)?;
    layers.head.register(&mut store, &mut rng)?;
    Ok(DiscState {
        config,
        store,
        seed,
        layers,
    })
}

/// Dense embed to (N, 3, 16, 16) then one sub-pixel x2 upsample to
/// (N, 3, 32, 32), the image branch's concat resolution.
pub fn attribute_branch_forward(att: &Tensor, state: &DiscState) -> Result<Tensor> {
    let (n, f) = att.dims2()?;
    if f != ATTR_COUNT {
        return Err(Error::shape(
            "attribute_branch",
            format!("attribute batch has {f} entries per row, expected {ATTR_COUNT}"),
        ));
    }
    let es = state.config.attr_embed_side;
    let embedded = state.layers.attr_embed.forward(&state.store, att)?;
    let plane = reshape(&embedded, vec![n, 3, es, es])?;
    state.layers.attr_up.forward(&state.store, &plane)
}

/// Probability in (0, 1) that each image is real, conditioned on its
/// attribute vector. Shape (N, 1).
pub fn discriminator_forward(img: &Tensor, att: &Tensor, state: &DiscState) -> Result<Tensor> {
    let (n, c, h, w) = img.dims4()?;
    let side = state.config.input_side;
    if c != 3 || h != side || w != side {
        return Err(Error::shape(
            "discriminator_forward",
            format!("expected (N, 3, {side}, {side}), got {:?}", img.shape()),
        ));
    }
    let h1 = state.layers.unit1.forward(&state.store, img)?;
    let h2 = state.layers.unit2.forward(&state.store, &h1)?;
    let attr = attribute_branch_forward(att, state)?;
    let joined = concat_channels(&h2, &attr)?;
    let h3 = state.layers.unit3.forward(&state.store, &joined)?;
    let h4 = state.layers.unit4.forward(&state.store, &h3)?;
    let (_, cc, hh, ww) = h4.dims4()?;
    let flat = reshape(&h4, vec![n, cc * hh * ww])?;
    Ok(sigmoid(&state.layers.head.forward(&state.store, &flat)?))
}
