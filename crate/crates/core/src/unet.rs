//! Dual-attention U-Net that refines the generator's SR prediction.
//!
//! Input is the SR image concatenated with a bicubic upsampling of the LR
//! image (6 channels). Encoder levels stack conv+LeakyReLU pairs with a
//! squeeze-and-excitation block, then max-pool and dropout. Decoder levels
//! apply dual attention (channel SE times an amplified spatial map) to the
//! incoming features, sub-pixel upsample, concatenate the same-level encoder
//! skip and fuse with conv pairs. A 1x1 conv with tanh produces the output.

use crate::error::{Error, Result};
use crate::generator::ForwardMode;
use crate::nn::{lrelu, sigmoid, tanh, Conv2dLayer, Init, SeBlock, SubPixelUp};
use crate::tensor::{
    add, concat_channels, dropout, hadamard, max_pool2, DropoutMode, ParamStore, SeededRng,
    Tensor,
};

#[derive(Debug, Clone)]
pub struct UNetConfig {
    /// Encoder levels (each halves resolution once).
    pub depth: usize,
    pub base_channels: usize,
    /// Channel width cap as levels deepen.
    pub channel_cap: usize,
    pub dropout_p: f32,
    pub se_reduction: usize,
    pub input_side: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            depth: 4,
            base_channels: 32,
            channel_cap: 256,
            dropout_p: 0.2,
            se_reduction: 8,
            input_side: 128,
        }
    }
}

impl UNetConfig {
    pub fn desk() -> Self {
        UNetConfig {
            depth: 3,
            base_channels: 8,
            channel_cap: 64,
            se_reduction: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("unet depth must be >= 1".into()));
        }
        if self.input_side % (1 << self.depth) != 0 {
            return Err(Error::Config(format!(
                "input side {} not divisible by 2^{}",
                self.input_side, self.depth
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        for level in 0..=self.depth {
            let c = self.width(level);
            if self.se_reduction == 0 || c % self.se_reduction != 0 {
                return Err(Error::Config(format!(
                    "level {level} width {c} not divisible by se reduction {}",
                    self.se_reduction
                )));
            }
        }
        Ok(())
    }

    pub fn width(&self, level: usize) -> usize {
        (self.base_channels << level).min(self.channel_cap)
    }
}

/// Channel attention (SE) times an amplified spatial attention map:
/// out = (stack_C(sigmoid(conv1x1(x))) + 1) (x) se(x).
pub struct DualAttention {
    pub se: SeBlock,
    pub spatial: Conv2dLayer,
}

impl DualAttention {
    pub fn new(name: &str, channels: usize, se_reduction: usize) -> Result<Self> {
        Ok(DualAttention {
            se: SeBlock::new(format!("{name}.se"), channels, se_reduction)?,
            spatial: Conv2dLayer::same(format!("{name}.spatial"), channels, 1, 1, Init::Glorot),
        })
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut SeededRng) -> Result<()> {
        self.se.register(store, rng)?;
        self.spatial.register(store, rng)
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let x_se = self.se.forward(store, x)?;
        let s = sigmoid(&self.spatial.forward(store, x)?);
        // (s + 1) broadcasts over channels, exactly a C-fold stacking.
        let amplified = add(&s, &Tensor::scalar(1.0))?;
        hadamard(&amplified, &x_se)
    }
}

struct EncLevel {
    conv1: Conv2dLayer,
    conv2: Conv2dLayer,
    se: SeBlock,
}

impl EncLevel {
    fn new(name: &str, in_ch: usize, out_ch: usize, se_reduction: usize) -> Result<Self> {
        Ok(EncLevel {
            conv1: Conv2dLayer::same(format!("{name}.conv1"), in_ch, out_ch, 3, Init::He),
            conv2: Conv2dLayer::same(format!("{name}.conv2"), out_ch, out_ch, 3, Init::He),
            se: SeBlock::new(format!("{name}.se"), out_ch, se_reduction)?,
        })
    }

    fn register(&self, store: &mut ParamStore, rng: &mut SeededRng) -> Result<()> {
        self.conv1.register(store, rng)?;
        self.conv2.register(store, rng)?;
        self.se.register(store, rng)
    }

    fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let h = lrelu(&self.conv1.forward(store, x)?);
        let h = lrelu(&self.conv2.forward(store, &h)?);
        self.se.forward(store, &h)
    }
}

struct DecLevel {
    attention: DualAttention,
    up: SubPixelUp,
    conv1: Conv2dLayer,
    conv2: Conv2dLayer,
}

struct Layers {
    encoders: Vec<EncLevel>,
    bottleneck: EncLevel,
    decoders: Vec<DecLevel>,
    head: Conv2dLayer,
}

pub struct UNetState {
    pub config: UNetConfig,
    pub store: ParamStore,
    pub seed: u64,
    layers: Layers,
}

pub fn build_unet(config: UNetConfig, seed: u64) -> Result<UNetState> {
    config.validate()?;
    let mut encoders = Vec::new();
    for level in 0..config.depth {
        let in_ch = if level == 0 {
            6
        } else {
            config.width(level - 1)
        };
        encoders.push(EncLevel::new(
            &format!("unet.enc{level}"),
            in_ch,
            config.width(level),
            config.se_reduction,
        )?);
    }
    let bottleneck = EncLevel::new(
        "unet.bottleneck",
        config.width(config.depth - 1),
        config.width(config.depth),
        config.se_reduction,
    )?;
    let mut decoders = Vec::new();
    for level in (0..config.depth).rev() {
        let in_ch = if level + 1 == config.depth {
            config.width(config.depth)
        } else {
            config.width(level + 1)
        };
        let skip_ch = config.width(level);
        decoders.push(DecLevel {
            attention: DualAttention::new(
                &format!("unet.dec{level}.attn"),
                in_ch,
                config.se_reduction,
            )?,
            up: SubPixelUp::new(format!("unet.dec{level}.up"), in_ch, 2, Init::He),
            conv1: Conv2dLayer::same(
                format!("unet.dec{level}.conv1"),
                in_ch + skip_ch,
                skip_ch,
                3,
                Init::He,
            ),
            conv2: Conv2dLayer::same(
                format!("unet.dec{level}.conv2"),
                skip_ch,
                skip_ch,
                3,
                Init::He,
            ),
        });
    }
    let head = Conv2dLayer::same("unet.head", config.width(0), 3, 1, Init::Glorot);

    let layers = Layers {
        encoders,
        bottleneck,
        decoders,
        head,
    };
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(seed);
    for e in &layers.encoders {
        e.register(&mut store, &mut rng)?;
    }
    layers.bottleneck.register(&mut store, &mut rng)?;
    for d in &layers.decoders {
        d.attention.register(&mut store, &mut rng)?;
        d.up.register(&mut store, &mut rng)?;
        d.conv1.register(&mut store, &mut rng)?;
        d.conv2.register(&mut store, &mut rng)?;
    }
    layers.head.register(&mut store, &mut rng)?;
    Ok(UNetState {
        config,
        store,
        seed,
        layers,
    })
}

impl UNetState {
    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }
}

/// Refines the generator prediction. Both inputs are (N, 3, side, side) in
/// [-1, 1]; output matches and lies strictly inside (-1, 1).
pub fn unet_forward(
    sr_aga: &Tensor,
    lr_bicubic: &Tensor,
    state: &UNetState,
    mode: ForwardMode,
    rng: &mut SeededRng,
) -> Result<Tensor> {
    let side = state.config.input_side;
    for (label, t) in [("sr input", sr_aga), ("bicubic input", lr_bicubic)] {
        let (_, c, h, w) = t.dims4()?;
        if c != 3 || h != side || w != side {
            return Err(Error::shape(
                "unet_forward",
                format!("{label}: expected (N, 3, {side}, {side}), got {:?}", t.shape()),
            ));
        }
    }
    let drop_mode = match mode {
        ForwardMode::Train => DropoutMode::Train,
        ForwardMode::Eval => DropoutMode::Eval,
    };
    let mut h = concat_channels(sr_aga, lr_bicubic)?;
    let mut skips = Vec::with_capacity(state.config.depth);
    for enc in &state.layers.encoders {
        let features = enc.forward(&state.store, &h)?;
        skips.push(features.clone());
        let pooled = max_pool2(&features)?;
        h = dropout(&pooled, state.config.dropout_p, drop_mode, rng)?;
    }
    h = state.layers.bottleneck.forward(&state.store, &h)?;
    for dec in &state.layers.decoders {
        let attended = dec.attention.forward(&state.store, &h)?;
        let up = lrelu(&dec.up.forward(&state.store, &attended)?);
        let skip = skips.pop().expect("one skip per decoder level");
        let cat = concat_channels(&up, &skip)?;
        let f = lrelu(&dec.conv1.forward(&state.store, &cat)?);
        h = lrelu(&dec.conv2.forward(&state.store, &f)?);
    }
    let out = tanh(&state.layers.head.forward(&state.store, &h)?);
    Ok(match mode {
        ForwardMode::Train => out,
        ForwardMode::Eval => out.detach(),
    })
}
