use std::collections::HashMap;

use super::{SeededRng, Tensor};
use crate::error::{Error, Result};

/// Adam hyperparameters. Defaults follow the usual (0.9, 0.999, 1e-8).
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamParams {
    pub fn with_lr(lr: f32) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Entry {
    name: String,
    tensor: Tensor,
    m: Vec<f32>,
    v: Vec<f32>,
}

/// Ordered map from parameter path (e.g. "gen.aga0.conv1.w") to a leaf
/// variable tensor, with per-parameter Adam moment buffers and a shared step
/// counter.
#[derive(Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new parameter. Names must be unique.
    pub fn register(&mut self, name: &str, shape: Vec<usize>, data: Vec<f32>) -> Result<Tensor> {
        if self.index.contains_key(name) {
            return Err(Error::Usage(format!("duplicate parameter name '{name}'")));
        }
        let tensor = Tensor::var(shape, data)?;
        let n = tensor.len();
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            tensor: tensor.clone(),
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        Ok(tensor)
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        let idx = self
            .index
            .get(name)
            .ok_or_else(|| Error::Usage(format!("unknown parameter '{name}'")))?;
        Ok(self.entries[*idx].tensor.clone())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Iterates (name, tensor, adam m, adam v) in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor, &[f32], &[f32])> {
        self.entries
            .iter()
            .map(|e| (e.name.as_str(), &e.tensor, e.m.as_slice(), e.v.as_slice()))
    }

    /// Overwrites a parameter's value (and optionally its moments), e.g. when
    /// restoring a checkpoint. Fails if a recorded graph still references it.
    pub fn load_values(
        &mut self,
        name: &str,
        data: &[f32],
        m: Option<&[f32]>,
        v: Option<&[f32]>,
    ) -> Result<()> {
        let idx = *self
            .index
            .get(name)
            .ok_or_else(|| Error::Usage(format!("unknown parameter '{name}'")))?;
        let entry = &mut self.entries[idx];
        if data.len() != entry.tensor.len() {
            return Err(Error::shape(
                "load_values",
                format!(
                    "parameter '{name}': stored length {} != expected {}",
                    data.len(),
                    entry.tensor.len()
                ),
            ));
        }
        entry.tensor.data_mut()?.copy_from_slice(data);
        if let Some(m) = m {
            entry.m.copy_from_slice(m);
        }
        if let Some(v) = v {
            entry.v.copy_from_slice(v);
        }
        Ok(())
    }

    /// Clears every parameter's accumulated gradient.
    pub fn clear_grads(&self) {
        for e in &self.entries {
            e.tensor.clear_grad();
        }
    }

    /// Returns parameter names whose accumulated gradient is absent or
    /// all-zero. Used by dead-path checks.
    pub fn zero_grad_params(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| match e.tensor.grad() {
                None => true,
                Some(g) => g.iter().all(|v| *v == 0.0),
            })
            .map(|e| e.name.clone())
            .collect()
    }

    /// One bias-corrected Adam update, in place. Gradients must have been
    /// populated by a backward pass; they are left untouched (the caller
    /// clears them). The recorded graph must be dropped first so parameters
    /// are uniquely held.
    pub fn adam_step(&mut self, p: AdamParams) -> Result<()> {
        // Validate all gradients exist before mutating anything.
        for e in &self.entries {
            if !e.tensor.has_grad() {
                return Err(Error::Usage(format!(
                    "adam_step: parameter '{}' has no gradient; run backward first",
                    e.name
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - p.beta1.powi(t);
        let bc2 = 1.0 - p.beta2.powi(t);
        for e in &mut self.entries {
            let grad = e.tensor.grad().expect("validated above");
            let data = e.tensor.data_mut()?;
            for i in 0..data.len() {
                let g = grad[i];
                e.m[i] = p.beta1 * e.m[i] + (1.0 - p.beta1) * g;
                e.v[i] = p.beta2 * e.v[i] + (1.0 - p.beta2) * g * g;
                let m_hat = e.m[i] / bc1;
                let v_hat = e.v[i] / bc2;
                data[i] -= p.lr * m_hat / (v_hat.sqrt() + p.eps);
            }
        }
        Ok(())
    }
}

/// He-uniform init: U(-b, b) with b = sqrt(6 / fan_in). For layers feeding
/// ReLU-family activations.
pub fn he_uniform(rng: &mut SeededRng, fan_in: usize, n: usize) -> Vec<f32> {
    let b = (6.0 / fan_in as f32).sqrt();
    (0..n).map(|_| rng.uniform(-b, b)).collect()
}

/// Glorot-uniform init: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)). For
/// layers feeding sigmoid or tanh.
pub fn glorot_uniform(rng: &mut SeededRng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f32> {
    let b = (6.0 / (fan_in + fan_out) as f32).sqrt();
    (0..n).map(|_| rng.uniform(-b, b)).collect()
}
