//! Image-domain neural building blocks shared by the encoder and decoder:
//! convolutions, batch normalization, bilinear resizing, pixel
//! shuffle/unshuffle, pooling, and the two-layer FFN.

mod conv;
mod ffn;
mod norm;
mod pool;
mod resize;
mod shuffle;

pub use conv::{im2col_ref, Conv2d};
pub use ffn::Ffn;
pub use norm::{BatchNorm2d, LayerNorm};
pub use pool::global_avg_pool;
pub use resize::bilinear_resize;
pub use shuffle::{pixel_shuffle, pixel_unshuffle};

use crate::real::Real;
use crate::tensor::Tensor;

/// One named piece of module state, as seen by [`Params::visit`].
pub enum Slot<'a, T: Real> {
    /// A learnable tensor: bound to the tape, updated by the optimizer,
    /// counted by `parameter_count`, saved and loaded by checkpoints.
    Trainable(&'a mut Tensor<T>),
    /// Non-learned state (batch-norm running statistics): saved and loaded
    /// by checkpoints but never tracked or optimized.
    Buffer(&'a std::cell::RefCell<Tensor<T>>),
}

/// Uniform traversal of module state. Implementations call `f` exactly once
/// per slot, with stable dot-separated names (`"{prefix}.weight"`), in a
/// deterministic order.
pub trait Params<T: Real> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, Slot<'_, T>));
}

/// Total element count over trainable slots.
pub fn parameter_count<T: Real>(module: &mut dyn Params<T>) -> usize {
    let mut n = 0;
    module.visit("p", &mut |_, slot| {
        if let Slot::Trainable(t) = slot {
            n += t.numel();
        }
    });
    n
}
