//! Linear-time semantic segmentation, built from scratch and built to be
//! checked.
//!
//! The crate implements a hybrid encoder whose token mixer runs sliding-window
//! neighborhood attention in series with a four-direction 2D selective
//! state-space scan, and a decoder that scans a multi-scale context stack at
//! coarse resolution before fusing per-scale features for dense prediction.
//! Everything sits on a small tape-based autodiff engine, so the same code
//! paths serve inference, gradient checks, and toy training runs.
//!
//! Entry points:
//! - [`tensor::Tensor`] and [`tensor::Tape`] — dense NCHW tensors with
//!   reverse-mode differentiation.
//! - [`model::SegModel`] — the full network, from [`model::ModelConfig`].
//! - [`error::Error`] — one error type, with process exit codes for the CLI.
//! - [`guide`] — the book, compiled: every chapter doc-tested in place.

pub mod attention;
pub mod bench;
pub mod cli;
pub mod data;
pub mod erf;
pub mod error;
pub mod guide;
pub mod init;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod real;
pub mod ssm;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use real::{Dtype, Real};
pub use tensor::{Tape, Tensor};
