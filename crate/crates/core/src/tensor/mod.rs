//! Reverse-mode differentiable tensor engine.
//!
//! Tensors are dense n-dimensional f32 arrays. Image tensors use NxCxHxW
//! layout. Every operation records its inputs, so calling [`Tensor::backward`]
//! on a scalar walks the recorded graph in reverse and accumulates gradients
//! into leaf variables. The graph is freed as soon as the tensors that make it
//! up are dropped; training clears it every step by letting the loss go out of
//! scope.

mod gradcheck;
#[doc(hidden)]
pub mod kernels;
mod ops;
mod rng;
mod store;

pub use gradcheck::{gradcheck, gradcheck_directional, GradCheckReport};
pub use ops::{
    activation, add, concat_channels, conv2d, d_loss_op, dense, dropout, elementwise,
    g_adv_loss_op, global_avg_pool, hadamard, mae_loss_op, max_pool2, mean_all, mse_loss_op,
    pixel_shuffle, pixel_unshuffle, reshape, slice_channels, sum_all, weighted_sum, Activation,
    DropoutMode, ElementwiseKind, Op, PROB_EPS,
};
pub use rng::SeededRng;
pub use store::{glorot_uniform, he_uniform, AdamParams, ParamStore};

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f32>,
    /// Persistent gradient buffer; present only on leaf variables.
    /// `None` until the first backward pass reaches the variable.
    grad: Option<Mutex<Option<Vec<f32>>>>,
    op: Op,
}

/// Dense f32 tensor with shape metadata and an optional gradient buffer.
///
/// Cloning is cheap (shared storage). Data is immutable once built except for
/// in-place optimizer updates on uniquely-held parameters.
#[derive(Clone)]
pub struct Tensor {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("var", &self.is_var())
            .finish()
    }
}

pub(crate) fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let expect: usize = shape.iter().product();
    if expect != len {
        return Err(Error::shape(
            "tensor",
            format!("shape {shape:?} expects {expect} elements, got {len}"),
        ));
    }
    Ok(())
}

impl Tensor {
    /// Plain (non-differentiable) tensor.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_len(&shape, data.len())?;
        Ok(Self::unchecked(shape, data, Op::Leaf, false))
    }

    /// Leaf variable: participates in backward and owns a gradient buffer.
    pub fn var(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_len(&shape, data.len())?;
        Ok(Self::unchecked(shape, data, Op::Leaf, true))
    }

    pub(crate) fn unchecked(shape: Vec<usize>, data: Vec<f32>, op: Op, var: bool) -> Self {
        Tensor {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                grad: if var { Some(Mutex::new(None)) } else { None },
                op,
            }),
        }
    }

    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f32>, op: Op) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self::unchecked(shape, data, op, false)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::unchecked(shape, vec![0.0; n], Op::Leaf, false)
    }

    pub fn full(shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Self::unchecked(shape, vec![value; n], Op::Leaf, false)
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f32) -> Self {
        Self::unchecked(vec![1], vec![value], Op::Leaf, false)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.inner.data
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn is_var(&self) -> bool {
        self.inner.grad.is_some()
    }

    pub(crate) fn op(&self) -> &Op {
        &self.inner.op
    }

    /// (N, C, H, W) of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.inner.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(
                "dims4",
                format!("expected rank-4 tensor, got shape {:?}", self.inner.shape),
            )),
        }
    }

    /// (N, F) of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.inner.shape[..] {
            [n, f] => Ok((n, f)),
            _ => Err(Error::shape(
                "dims2",
                format!("expected rank-2 tensor, got shape {:?}", self.inner.shape),
            )),
        }
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.len() != 1 {
            return Err(Error::Usage(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }

    pub fn all_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    /// Leaf copy sharing no history with this tensor. Gradients do not flow
    /// through a detach point.
    pub fn detach(&self) -> Tensor {
        Tensor::unchecked(
            self.inner.shape.clone(),
            self.inner.data.clone(),
            Op::Leaf,
            false,
        )
    }

    /// Leaf variable copy of this tensor's values.
    pub fn detach_var(&self) -> Tensor {
        Tensor::unchecked(
            self.inner.shape.clone(),
            self.inner.data.clone(),
            Op::Leaf,
            true,
        )
    }

    /// Snapshot of the accumulated gradient, if any backward pass reached
    /// this variable.
    pub fn grad(&self) -> Option<Vec<f32>> {
        let slot = self.inner.grad.as_ref()?;
        slot.lock().unwrap().clone()
    }

    pub fn has_grad(&self) -> bool {
        self.inner
            .grad
            .as_ref()
            .map(|g| g.lock().unwrap().is_some())
            .unwrap_or(false)
    }

    /// Adds `delta` into the persistent gradient buffer of a leaf variable.
    pub fn accumulate_grad(&self, delta: &[f32]) -> Result<()> {
        let slot = self
            .inner
            .grad
            .as_ref()
            .ok_or_else(|| Error::Usage("accumulate_grad on a non-variable tensor".into()))?;
        if delta.len() != self.len() {
            return Err(Error::shape(
                "accumulate_grad",
                format!("gradient length {} != data length {}", delta.len(), self.len()),
            ));
        }
        let mut g = slot.lock().unwrap();
        match g.as_mut() {
            Some(buf) => {
                for (b, d) in buf.iter_mut().zip(delta) {
                    *b += d;
                }
            }
            None => *g = Some(delta.to_vec()),
        }
        Ok(())
    }

    /// Drops the accumulated gradient (next backward starts from zero).
    pub fn clear_grad(&self) {
        if let Some(slot) = self.inner.grad.as_ref() {
            *slot.lock().unwrap() = None;
        }
    }

    /// Mutable access to the data of a uniquely-held tensor. Fails while any
    /// recorded graph (or other handle) still references it.
    pub fn data_mut(&mut self) -> Result<&mut [f32]> {
        match Arc::get_mut(&mut self.inner) {
            Some(inner) => Ok(&mut inner.data),
            None => Err(Error::Usage(
                "tensor is still referenced by a recorded graph; drop the graph before mutating"
                    .into(),
            )),
        }
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
    /// reachable leaf variable and stay until cleared, so two backward calls
    /// without a clear double them.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        let order = topo_order(self);
        let mut grads: HashMap<u64, Vec<f32>> = HashMap::new();
        grads.insert(self.id(), vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else {
                continue;
            };
            if t.is_var() {
                t.accumulate_grad(&g)?;
            }
            t.op().backward(t, &g, &mut grads)?;
        }
        Ok(())
    }
}

/// Accumulates `delta` into the map entry for `parent`, creating it if absent.
pub(crate) fn stage_grad(grads: &mut HashMap<u64, Vec<f32>>, parent: &Tensor, delta: Vec<f32>) {
    match grads.entry(parent.id()) {
        std::collections::hash_map::Entry::Occupied(mut e) => {
            let buf = e.get_mut();
            for (b, d) in buf.iter_mut().zip(&delta) {
                *b += d;
            }
        }
        std::collections::hash_map::Entry::Vacant(e) => {
            e.insert(delta);
        }
    }
}

/// Post-order over the recorded graph: parents appear before consumers.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    enum Visit {
        Enter(Tensor),
        Exit(Tensor),
    }
    let mut order = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stack = vec![Visit::Enter(root.clone())];
    while let Some(v) = stack.pop() {
        match v {
            Visit::Enter(t) => {
                if !seen.insert(t.id()) {
                    continue;
                }
                stack.push(Visit::Exit(t.clone()));
                for p in t.op().parents() {
                    stack.push(Visit::Enter(p));
                }
            }
            Visit::Exit(t) => order.push(t),
        }
    }
    order
}
