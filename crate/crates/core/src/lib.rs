//! AGA-GAN + U-Net face hallucination, self-contained on CPU.
//!
//! An attribute-guided attention GAN upscales aligned low-resolution face
//! images (4x or 8x) with the help of a 38-entry facial attribute vector; a
//! dual-attention U-Net refines the prediction. Everything runs on a small
//! from-scratch reverse-mode tensor engine, and the evaluation side implements
//! PSNR, SSIM, FSIM, SRE, UIQ and BRISQUE.

pub mod attributes;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod tensor;
pub mod trainer;
pub mod unet;

pub use attributes::{AttributeVector, ATTR_COUNT};
pub use error::{Error, Result};
pub use tensor::Tensor;
