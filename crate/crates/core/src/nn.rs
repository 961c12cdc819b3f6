//! Layer builders over a [`ParamStore`]: thin structs that know their
//! parameter names and hyperparameters. States rebuild them from config, so
//! checkpoints only carry the store.

use crate::error::{Error, Result};
use crate::tensor::{
    activation, conv2d, dense, global_avg_pool, hadamard, he_uniform, glorot_uniform,
    pixel_shuffle, reshape, Activation, ParamStore, SeededRng, Tensor,
};

/// He for layers feeding ReLU-family activations, Glorot before sigmoid/tanh
/// or linear use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    He,
    Glorot,
}

pub const LEAKY_SLOPE: f32 = 0.2;

pub fn lrelu(x: &Tensor) -> Tensor {
    activation(x, Activation::LeakyRelu(LEAKY_SLOPE))
}

pub fn relu(x: &Tensor) -> Tensor {
    activation(x, Activation::Relu)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    activation(x, Activation::Sigmoid)
}

pub fn tanh(x: &Tensor) -> Tensor {
    activation(x, Activation::Tanh)
}

#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub init: Init,
}

impl Conv2dLayer {
    pub fn new(
        name: impl Into<String>,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: Init,
    ) -> Self {
        Conv2dLayer {
            name: name.into(),
            in_ch,
            out_ch,
            k,
            stride,
            pad,
            init,
        }
    }

    /// Stride-1 convolution with "same" padding.
    pub fn same(name: impl Into<String>, in_ch: usize, out_ch: usize, k: usize, init: Init) -> Self {
        Self::new(name, in_ch, out_ch, k, 1, k / 2, init)
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut SeededRng) -> Result<()> {
        let fan_in = self.in_ch * self.k * self.k;
        let fan_out = self.out_ch * self.k * self.k;
        let n = self.out_ch * fan_in;
        let data = match self.init {
            Init::He => he_uniform(rng, fan_in, n),
            Init::Glorot => glorot_uniform(rng, fan_in, fan_out, n),
        };
        store.register(
            &format!("{}.w", self.name),
            vec![self.out_ch, self.in_ch, self.k, self.k],
            data,
        )?;
        store.register(
            &format!("{}.b", self.name),
            vec![self.out_ch],
            vec![0.0; self.out_ch],
        )?;
        Ok(())
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let w = store.get(&format!("{}.w", self.name))?;
        let b = store.get(&format!("{}.b", self.name))?;
        conv2d(x, &w, &b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub name: String,
    pub in_f: usize,
    pub out_f: usize,
    pub init: Init,
}

impl DenseLayer {
    pub fn new(name: impl Into<String>, in_f: usize, out_f: usize, init: Init) -> Self {
        DenseLayer {
            name: name.into(),
            in_f,
            out_f,
            init,
        }
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut SeededRng) -> Result<()> {
        let n = self.in_f * self.out_f;
        let data = match self.init {
            Init::He => he_uniform(rng, self.in_f, n),
            Init::Glorot => glorot_uniform(rng, self.in_f, self.out_f, n),
        };
        store.register(
            &format!("{}.w", self.name),
            vec![self.out_f, self.in_f],
            data,
        )?;
        store.register(
            &format!("{}.b", self.name),
            vec![self.out_f],
            vec![0.0; self.out_f],
        )?;
        Ok(())
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let w = store.get(&format!("{}.w", self.name))?;
        let b = store.get(&format!("{}.b", self.name))?;
        dense(x, &w, &b)
    }
}

/// Sub-pixel x2 upsample: conv to r^2 * C channels, then pixel shuffle.
#[derive(Debug, Clone)]
pub struct SubPixelUp {
    pub conv: Conv2dLayer,
    pub r: usize,
}

impl SubPixelUp {
    pub fn new(name: impl Into<String>, channels: usize, r: usize, init: Init) -> Self {
        SubPixelUp {
            conv: Conv2dLayer::same(name, channels, channels * r * r, 3, init),
            r,
        }
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut SeededRng) -> Result<()> {
        self.conv.register(store, rng)
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        pixel_shuffle(&self.conv.forward(store, x)?, self.r)
    }
}

/// Squeeze-and-excitation: global average pool, bottleneck MLP, sigmoid
/// per-channel rescale.
#[derive(Debug, Clone)]
pub struct SeBlock {
    pub channels: usize,
    pub squeeze: DenseLayer,
    pub excite: DenseLayer,
}

impl SeBlock {
    pub fn new(name: impl Into<String>, channels: usize, reduction: usize) -> Result<Self> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(Error::Config(format!(
                "se block: {channels} channels not divisible by reduction {reduction}"
            )));
        }
        let name = name.into();
        Ok(SeBlock {
            channels,
            squeeze: DenseLayer::new(format!("{name}.squeeze"), channels, channels / reduction, Init::He),
            excite: DenseLayer::new(format!("{name}.excite"), channels / reduction, channels, Init::Glorot),
        })
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut SeededRng) -> Result<()> {
        self.squeeze.register(store, rng)?;
        self.excite.register(store, rng)
    }

    /// Per-channel gate values in (0, 1), shape (N, C, 1, 1).
    pub fn scales(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let (n, c, _, _) = x.dims4()?;
        let pooled = reshape(&global_avg_pool(x)?, vec![n, c])?;
        let h = relu(&self.squeeze.forward(store, &pooled)?);
        let s = sigmoid(&self.excite.forward(store, &h)?);
        reshape(&s, vec![n, c, 1, 1])
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let s = self.scales(store, x)?;
        hadamard(x, &s)
    }
}
