//! Dense tensors and reverse-mode automatic differentiation.
//!
//! Tensors are row-major, contiguous, and immutable once built; feature maps
//! use NCHW layout throughout the crate. Differentiation is tape-based: bind
//! a tensor to a [`Tape`] with [`Tape::var`], build the computation out of
//! the ops in this module, then call [`Tensor::backward`] on a scalar root.
//! Each recorded op carries a vector-Jacobian-product callback; gradients of
//! fan-out nodes accumulate additively, and leaf gradients persist across
//! `backward` calls until [`Tape::zero_grads`].

mod gradcheck;
mod ops;
pub mod smt1;
mod tape;

pub use gradcheck::grad_check;
pub use ops::concat_channels;
pub use tape::Tape;

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::real::Real;
use tape::NodeId;

/// A dense row-major tensor, optionally tracked on an autodiff tape.
pub struct Tensor<T: Real = f32> {
    shape: Vec<usize>,
    data: Rc<[T]>,
    node: Option<NodeId>,
    tape: Option<Tape<T>>,
}

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            node: self.node,
            tape: self.tape.clone(),
        }
    }
}

impl<T: Real> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let head: Vec<_> = self.data.iter().take(8).collect();
        write!(
            f,
            "Tensor{:?} {:?}{}",
            self.shape,
            head,
            if self.data.len() > 8 { ".." } else { "" }
        )
    }
}

impl<T: Real> Tensor<T> {
    /// Builds a tensor from a flat row-major buffer. The shape may not
    /// contain zero-sized dims and must match the buffer length.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Tensor<T>> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("zero-sized dim in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} wants {} elements, buffer has {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor::plain(shape.to_vec(), data))
    }

    /// Internal constructor; callers guarantee shape/len agreement.
    pub(crate) fn plain(shape: Vec<usize>, data: Vec<T>) -> Tensor<T> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data: Rc::from(data),
            node: None,
            tape: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Tensor<T> {
        Tensor::plain(shape.to_vec(), vec![T::zero(); shape.iter().product()])
    }

    pub fn full(shape: &[usize], value: T) -> Tensor<T> {
        Tensor::plain(shape.to_vec(), vec![value; shape.iter().product()])
    }

    pub fn scalar(value: T) -> Tensor<T> {
        Tensor::plain(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Cheap handle to the shared data buffer, for VJP closures that must
    /// capture inputs without holding `Tensor` (and thus tape) references.
    pub(crate) fn data_rc(&self) -> Rc<[T]> {
        Rc::clone(&self.data)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::shape(format!(
                "item() on non-scalar shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub(crate) fn dims4(&self, what: &str) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(format!(
                "{what}: expected rank-4 NCHW, got {:?}",
                self.shape
            ))),
        }
    }

    pub(crate) fn dims3(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [b, c, l] => Ok((b, c, l)),
            _ => Err(Error::shape(format!(
                "{what}: expected rank-3 [B,C,L], got {:?}",
                self.shape
            ))),
        }
    }

    /// Whether gradients flow into this tensor (it is tracked on a tape).
    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub(crate) fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub(crate) fn tape(&self) -> Option<&Tape<T>> {
        self.tape.as_ref()
    }

    /// A copy sharing this buffer but detached from any tape.
    pub fn detached(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            node: None,
            tape: None,
        }
    }

    /// Replaces the buffer while keeping shape and tape binding. Used by the
    /// optimizer to step parameters between tape truncations.
    pub fn set_data(&mut self, data: Vec<T>) -> Result<()> {
        if data.len() != self.numel() {
            return Err(Error::shape(format!(
                "set_data: buffer of {} for shape {:?}",
                data.len(),
                self.shape
            )));
        }
        self.data = Rc::from(data);
        Ok(())
    }

    /// Accumulated gradient of this tensor if it is a tape leaf that has
    /// received one, as a detached tensor of the same shape.
    pub fn grad(&self) -> Option<Tensor<T>> {
        let tape = self.tape.as_ref()?;
        let g = tape.grad_of(self.node?)?;
        Some(Tensor::plain(self.shape.clone(), g))
    }

    /// Reverse pass from a scalar root with seed 1.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::graph(format!(
                "backward from non-scalar shape {:?}; use backward_seeded",
                self.shape
            )));
        }
        self.backward_seeded(&[T::one()])
    }

    /// Reverse pass from this tensor with an explicit cotangent seed.
    pub fn backward_seeded(&self, seed: &[T]) -> Result<()> {
        let node = self
            .node
            .ok_or_else(|| Error::graph("backward from a tensor not on any tape"))?;
        if seed.len() != self.numel() {
            return Err(Error::graph(format!(
                "seed length {} does not match tensor with {} elements",
                seed.len(),
                self.numel()
            )));
        }
        self.tape
            .as_ref()
            .expect("tracked tensor always holds its tape")
            .backward_from(node, seed.to_vec())
    }

    /// Records `out = op(inputs)` on the tape shared by the tracked inputs.
    /// `vjp` receives the upstream cotangent and returns per-input gradients
    /// aligned with `inputs`; entries for untracked inputs are ignored. The
    /// callback must capture raw buffers only, never `Tensor` handles, so
    /// dropping the tape frees everything.
    pub(crate) fn record(
        mut out: Tensor<T>,
        inputs: &[&Tensor<T>],
        vjp: impl Fn(&[T]) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Result<Tensor<T>> {
        let mut tape: Option<&Tape<T>> = None;
        for x in inputs {
            if let Some(t) = x.tape() {
                match tape {
                    None => tape = Some(t),
                    Some(prev) if Tape::same(prev, t) => {}
                    Some(_) => {
                        return Err(Error::graph("inputs tracked on two different tapes"));
                    }
                }
            }
        }
        if let Some(t) = tape {
            let in_nodes: Vec<Option<NodeId>> = inputs.iter().map(|x| x.node()).collect();
            let id = t.push_op(out.numel(), in_nodes, Box::new(vjp));
            out.node = Some(id);
            out.tape = Some(t.clone());
        }
        Ok(out)
    }

    pub(crate) fn bind_leaf(&self, tape: &Tape<T>, node: NodeId) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            node: Some(node),
            tape: Some(tape.clone()),
        }
    }
}

/// Errors out if any element is NaN or infinite. Compute ops call this on
/// their outputs; pure data-movement ops skip it.
pub(crate) fn ensure_finite<T: Real>(what: &str, data: &[T]) -> Result<()> {
    for (i, v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::numerics(format!(
                "{what}: non-finite value {v} at flat index {i}"
            )));
        }
    }
    Ok(())
}

/// Max-norm relative difference used by the oracle suites:
/// `max_i |a_i - b_i| / max(1, max|a|, max|b|)`.
pub fn rel_err<T: Real>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len(), "rel_err on mismatched lengths");
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for (x, y) in a.iter().zip(b) {
        diff = diff.max((x.as_f64() - y.as_f64()).abs());
        scale = scale.max(x.as_f64().abs()).max(y.as_f64().abs());
    }
    diff / scale
}
