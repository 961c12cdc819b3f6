//! 38-entry facial attribute descriptors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of attribute entries accompanying each face image.
pub const ATTR_COUNT: usize = 38;

/// Neutral value carried by unknown attributes: the maximum-entropy point of
/// a binary attribute in [0, 1] encoding.
pub const NEUTRAL: f32 = 0.5;

/// Attribute values in [0, 1] (dataset annotations map -1 -> 0, +1 -> 1)
/// plus a known/unknown mask. Unknown entries hold the neutral value.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeVector {
    values: [f32; ATTR_COUNT],
    known: [bool; ATTR_COUNT],
}

impl Default for AttributeVector {
    fn default() -> Self {
        Self::neutral()
    }
}

impl AttributeVector {
    /// All entries unknown (value 0.5).
    pub fn neutral() -> Self {
        AttributeVector {
            values: [NEUTRAL; ATTR_COUNT],
            known: [false; ATTR_COUNT],
        }
    }

    /// From 38 binary values; every entry known.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.len() != ATTR_COUNT {
            return Err(Error::Data(format!(
                "attribute vector needs {ATTR_COUNT} entries, got {}",
                bits.len()
            )));
        }
        let mut v = AttributeVector::neutral();
        for (i, b) in bits.iter().enumerate() {
            v.values[i] = if *b != 0 { 1.0 } else { 0.0 };
            v.known[i] = true;
        }
        Ok(v)
    }

    /// From CelebA-style +-1 annotations: -1 -> 0, +1 -> 1.
    pub fn from_pm1(vals: &[i32]) -> Result<Self> {
        if vals.len() != ATTR_COUNT {
            return Err(Error::Data(format!(
                "attribute vector needs {ATTR_COUNT} entries, got {}",
                vals.len()
            )));
        }
        let mut v = AttributeVector::neutral();
        for (i, raw) in vals.iter().enumerate() {
            v.values[i] = match raw {
                1 => 1.0,
                -1 => 0.0,
                other => {
                    return Err(Error::Data(format!(
                        "attribute {i}: expected +1 or -1, got {other}"
                    )))
                }
            };
            v.known[i] = true;
        }
        Ok(v)
    }

    pub fn values(&self) -> &[f32; ATTR_COUNT] {
        &self.values
    }

    pub fn known(&self) -> &[bool; ATTR_COUNT] {
        &self.known
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|k| **k).count()
    }

    pub fn set(&mut self, idx: usize, value: f32) {
        self.values[idx] = value;
        self.known[idx] = true;
    }

    /// Marks one entry unknown, resetting it to the neutral value.
    pub fn forget(&mut self, idx: usize) {
        self.values[idx] = NEUTRAL;
        self.known[idx] = false;
    }

    /// Batches attribute vectors into an (N, 38) tensor.
    pub fn batch(atts: &[AttributeVector]) -> Tensor {
        let mut data = Vec::with_capacity(atts.len() * ATTR_COUNT);
        for a in atts {
            data.extend_from_slice(&a.values);
        }
        Tensor::new(vec![atts.len(), ATTR_COUNT], data).expect("length is n*38 by construction")
    }
}
