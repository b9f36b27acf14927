//! Selective state-space scans: the 1D recurrence kernel, its literal
//! reference implementation, the four scan orders over 2D maps, and the
//! SS2D block that combines them.

mod reorder;
mod scan;
mod ss2d;

pub use reorder::{directional_reorder, directional_restore, NUM_DIRECTIONS};
pub use scan::{dt_rank_for, scan_core, selective_scan_1d, selective_scan_ref, SsmParams};
pub use ss2d::Ss2dBlock;
