//! Sparse temporal attention.
//!
//! Masks are built per layer from a window ladder: one window group widens
//! with depth while the other narrows, and both dilate in deeper layers.
//! Hierarchical attention scores pooled queries against pooled keys at
//! several power-of-two scales and sums the weighted scores before one
//! softmax over the union of the per-scale neighbourhoods. Everything runs
//! through a single fused kernel, [`Graph::sparse_attention`](crate::seqcore::Graph::sparse_attention).

mod layer;
mod mask;
mod sparse;

pub use layer::{dswa_forward, hta_forward, AttentionParams};
pub use mask::{
    attended_pairs_count, build_sparse_mask, build_window_schedule, build_window_schedule_with,
    scale_count, AttentionMask, Neighborhood, ScaleSet, WindowConfig, WindowRole, WindowSpec,
    MAX_SCALES,
};
pub use sparse::aggregate_scales;
