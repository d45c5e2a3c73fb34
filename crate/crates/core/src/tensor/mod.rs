//! Dense f32 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheap handle (`Rc`) onto an immutable row-major f32
//! buffer plus an optional record of the operation that produced it. Ops
//! build a DAG by holding handles to their inputs; [`Tensor::backward`]
//! walks that DAG once in reverse topological order and accumulates
//! gradients additively into every reachable tensor that requires them.
//!
//! Data buffers are immutable after creation with one deliberate exception:
//! [`Tensor::set_data`] on leaves, which is how the optimizer applies
//! parameter updates between forward passes.

pub mod conv;
mod graph;
pub mod norm;
pub mod ops;

use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::{Ref, RefCell};
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::{arg_err, dim_err, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Backward rule recorded by an operation: given the output tensor and the
/// gradient flowing into it, accumulate gradient contributions into parents.
pub(crate) trait BackwardOp {
    fn parents(&self) -> &[Tensor];
    fn backward(&self, out: &Tensor, grad_out: &[f32]) -> Result<()>;
}

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f32>>,
    grad: RefCell<Option<Vec<f32>>>,
    requires_grad: bool,
    op: Option<Box<dyn BackwardOp>>,
}

/// N-dimensional f32 array participating in reverse-mode differentiation.
#[derive(Clone)]
pub struct Tensor {
    node: Rc<Node>,
}

impl core::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            self.node.id, self.node.shape, self.node.requires_grad
        )
    }
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(arg_err("tensor extents must be positive"));
    }
    let numel: usize = shape.iter().product();
    if numel != len {
        return Err(dim_err(alloc::format!(
            "shape {shape:?} implies {numel} elements, data has {len}"
        )));
    }
    Ok(())
}

impl Tensor {
    fn leaf(shape: &[usize], data: Vec<f32>, requires_grad: bool) -> Result<Tensor> {
        check_shape(shape, data.len())?;
        Ok(Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape: shape.to_vec(),
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                op: None,
            }),
        })
    }

    /// Constant tensor from row-major data.
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        Self::leaf(shape, data, false)
    }

    /// Trainable leaf tensor (accumulates gradients during backward).
    pub fn param(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        Self::leaf(shape, data, true)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Tensor {
        let numel: usize = shape.iter().product();
        Self::leaf(shape, vec![value; numel], false).expect("full: positive extents")
    }

    pub fn scalar(value: f32) -> Tensor {
        Self::full(&[1], value)
    }

    /// Output of a recorded operation. Degrades to a plain constant when no
    /// parent requires gradients, so inference builds no graph.
    pub(crate) fn from_op(shape: &[usize], data: Vec<f32>, op: Box<dyn BackwardOp>) -> Tensor {
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        check_shape(shape, data.len()).expect("op output shape/data agree");
        Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape: shape.to_vec(),
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                op: if requires_grad { Some(op) } else { None },
            }),
        }
    }

    pub(crate) fn id(&self) -> u64 {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    /// Shape as (batch, channels, height, width).
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.node.shape.as_slice() {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(dim_err(alloc::format!(
                "expected rank-4 tensor, got shape {:?}",
                self.node.shape
            ))),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.op.is_none()
    }

    pub fn data(&self) -> Ref<'_, Vec<f32>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.node.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.node.data.borrow()[0]
    }

    /// Replace the data of a leaf in place (parameter updates).
    pub fn set_data(&self, data: &[f32]) -> Result<()> {
        if data.len() != self.numel() {
            return Err(dim_err("set_data length differs from tensor size"));
        }
        self.node.data.borrow_mut().copy_from_slice(data);
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<f32>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// Leaf copy sharing no graph history with `self`.
    pub fn detach(&self) -> Tensor {
        Self::leaf(&self.node.shape, self.to_vec(), false).expect("detach preserves shape")
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[f32]) {
        debug_assert_eq!(contrib.len(), self.numel());
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (b, c) in buf.iter_mut().zip(contrib) {
                    *b += c;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    /// Mutable gradient buffer, allocated as zeros on first use. Lets hot
    /// ops accumulate in place instead of staging a contribution copy.
    pub(crate) fn grad_buf_mut(&self) -> core::cell::RefMut<'_, Vec<f32>> {
        {
            let mut slot = self.node.grad.borrow_mut();
            if slot.is_none() {
                *slot = Some(vec![0.0; self.numel()]);
            }
        }
        core::cell::RefMut::map(self.node.grad.borrow_mut(), |g| {
            g.as_mut().expect("grad buffer just ensured")
        })
    }

    /// Reverse-mode sweep from a scalar. Fills `grad` for every tensor in
    /// the graph that requires gradients.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(arg_err("backward requires a scalar root"));
        }
        if !self.requires_grad() {
            return Err(arg_err(
                "backward root does not depend on any tensor requiring gradients",
            ));
        }
        let order = graph::toposort(self);
        self.accumulate_grad(&[1.0]);
        for t in order.iter().rev() {
            let Some(op) = t.node.op.as_ref() else { continue };
            let grad = t.node.grad.borrow().clone();
            let Some(grad) = grad else { continue };
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(crate::Error::Numeric(
                    "non-finite gradient during backward".to_string(),
                ));
            }
            op.backward(t, &grad)?;
        }
        Ok(())
    }

    pub(crate) fn op(&self) -> Option<&dyn BackwardOp> {
        self.node.op.as_deref()
    }
}

/// Gaussian(0, std) row-major buffer, deterministic per RNG state.
pub fn randn_vec<R: rand::Rng>(rng: &mut R, n: usize, std: f32) -> Vec<f32> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0f32, std).expect("std must be finite and non-negative");
    (0..n).map(|_| normal.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_agreement_is_enforced() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::from_vec(&[2, 0], vec![]).is_err());
        assert!(Tensor::from_vec(&[2, 2], vec![1.0; 4]).is_ok());
    }

    #[test]
    fn detach_copies_data_and_drops_grad_tracking() {
        let p = Tensor::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let d = p.detach();
        assert_eq!(d.to_vec(), p.to_vec());
        assert!(!d.requires_grad());
        assert!(d.is_leaf());
    }

    #[test]
    fn randn_is_deterministic_per_seed() {
        let mut a = crate::rng::seed_rng(3);
        let mut b = crate::rng::seed_rng(3);
        assert_eq!(randn_vec(&mut a, 16, 0.02), randn_vec(&mut b, 16, 0.02));
    }
}
