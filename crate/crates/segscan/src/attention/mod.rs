//! Attention kernels: sliding-window neighborhood attention (linear in
//! pixels) and full global self-attention (quadratic, for coarse maps),
//! plus the masked-full-attention oracle used to verify the former.

mod global;
mod natten;

pub use global::{attend_full, GlobalAttention};
pub use natten::{natten_attend, natten_oracle, Natten};
