//! The Wengert list backing reverse-mode differentiation.
//!
//! Nodes are appended in execution order, so every op's inputs precede it
//! and one reverse sweep visits each node exactly once. The tape is a
//! single-owner structure (`Rc<RefCell<..>>`, not `Sync`); a training step
//! is the only writer while it runs.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub(crate) type NodeId = usize;

type Vjp<T> = Box<dyn Fn(&[T]) -> Vec<Option<Vec<T>>>>;

struct OpRecord<T> {
    inputs: Vec<Option<NodeId>>,
    vjp: Vjp<T>,
}

struct Entry<T> {
    numel: usize,
    /// Accumulated gradient; populated for leaves by the reverse sweep.
    grad: Option<Vec<T>>,
    /// `None` marks a leaf (variable), `Some` a recorded operation.
    op: Option<OpRecord<T>>,
}

struct Inner<T> {
    entries: Vec<Entry<T>>,
}

/// Gradient tape. Cloning the handle shares the same underlying tape.
pub struct Tape<T: Real> {
    inner: Rc<RefCell<Inner<T>>>,
}

impl<T: Real> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Tape<T> {
        Tape {
            inner: Rc::new(RefCell::new(Inner {
                entries: Vec::new(),
            })),
        }
    }

    pub(crate) fn same(a: &Tape<T>, b: &Tape<T>) -> bool {
        Rc::ptr_eq(&a.inner, &b.inner)
    }

    /// Number of nodes currently recorded.
    pub fn len(&self) -> usize {
        self.inner.borrow().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers `t` as a differentiable leaf and returns the tracked copy.
    pub fn var(&self, t: &Tensor<T>) -> Tensor<T> {
        let id = {
            let mut inner = self.inner.borrow_mut();
            inner.entries.push(Entry {
                numel: t.numel(),
                grad: None,
                op: None,
            });
            inner.entries.len() - 1
        };
        t.bind_leaf(self, id)
    }

    pub(crate) fn push_op(
        &self,
        numel: usize,
        inputs: Vec<Option<NodeId>>,
        vjp: Vjp<T>,
    ) -> NodeId {
        let mut inner = self.inner.borrow_mut();
        let id = inner.entries.len();
        debug_assert!(inputs.iter().flatten().all(|&i| i < id));
        inner.entries.push(Entry {
            numel,
            grad: None,
            op: Some(OpRecord { inputs, vjp }),
        });
        id
    }

    pub(crate) fn grad_of(&self, node: NodeId) -> Option<Vec<T>> {
        self.inner.borrow().entries.get(node)?.grad.clone()
    }

    /// Clears accumulated leaf gradients, keeping the recorded graph.
    pub fn zero_grads(&self) {
        for e in self.inner.borrow_mut().entries.iter_mut() {
            e.grad = None;
        }
    }

    /// Drops every node past the first `keep`. Training loops register all
    /// parameters first, then truncate back to that prefix after each step
    /// so the graph of the step is freed while leaf ids stay stable.
    pub fn truncate(&self, keep: usize) {
        self.inner.borrow_mut().entries.truncate(keep);
    }

    /// One reverse sweep from `root`. Cotangents of interior nodes live only
    /// for the sweep; leaf gradients accumulate into the tape.
    pub(crate) fn backward_from(&self, root: NodeId, seed: Vec<T>) -> Result<()> {
        let inner = &mut *self.inner.borrow_mut();
        if root >= inner.entries.len() {
            return Err(Error::graph("backward root is not on this tape"));
        }
        let mut pending: Vec<Option<Vec<T>>> = Vec::new();
        pending.resize_with(root + 1, || None);
        pending[root] = Some(seed);

        for id in (0..=root).rev() {
            let Some(cot) = pending[id].take() else {
                continue;
            };
            if inner.entries[id].op.is_some() {
                let (inputs, grads) = {
                    let op = inner.entries[id].op.as_ref().unwrap();
                    // VJP callbacks only read buffers captured at record
                    // time; they never touch the tape, so calling them under
                    // the borrow is fine.
                    let grads = (op.vjp)(&cot);
                    debug_assert_eq!(grads.len(), op.inputs.len());
                    (op.inputs.clone(), grads)
                };
                for (slot, g) in inputs.into_iter().zip(grads) {
                    let (Some(i), Some(g)) = (slot, g) else {
                        continue;
                    };
                    debug_assert_eq!(g.len(), inner.entries[i].numel);
                    match &mut pending[i] {
                        Some(buf) => accumulate(buf, &g),
                        slot @ None => *slot = Some(g),
                    }
                }
            } else {
                let entry = &mut inner.entries[id];
                match &mut entry.grad {
                    Some(buf) => accumulate(buf, &cot),
                    grad @ None => *grad = Some(cot),
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(dst: &mut [T], src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + *s;
    }
}
