//! The user guide, compiled.
//!
//! Each submodule's documentation is one chapter of the book under
//! `book/src/`, included verbatim with `include_str!`. Rustdoc therefore
//! runs every code snippet in the book as a doc-test, and the prose can
//! never drift from the library it describes: if an API in a chapter
//! changes, `cargo test --doc` fails until the chapter is fixed.
//!
//! Read the rendered version with `mdbook serve book/`, or browse these
//! modules in rustdoc — the content is identical by construction.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/tensors-and-autodiff.md")]
pub mod tensors_and_autodiff {}

#[doc = include_str!("../../../book/src/selective-scan.md")]
pub mod selective_scan {}

#[doc = include_str!("../../../book/src/neighborhood-attention.md")]
pub mod neighborhood_attention {}

#[doc = include_str!("../../../book/src/network.md")]
pub mod network {}

#[doc = include_str!("../../../book/src/training-and-verification.md")]
pub mod training_and_verification {}
