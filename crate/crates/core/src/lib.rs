//! Multi-stage boundary-aware transformer network (MSBATN) for temporal
//! action segmentation.
//!
//! The crate is organised bottom-up:
//!
//! - [`seqcore`]: dense `f64` tensors, a reverse-mode tape and Adam.
//! - [`attention`]: dual sliding-window masks, hierarchical scales and the
//!   fused sparse attention kernel.
//! - [`network`]: TCN blocks, the attention encoder, causal decoders,
//!   checkpoints and parameter/MAC accounting.
//! - [`losses`]: focal, dice, Gaussian cosine-similarity and truncated
//!   boundary losses and their weighted combination.
//! - [`segments`]: frame/segment conversions, boundary targets, peak
//!   detection and centre-weighted refinement.
//! - [`metrics`]: frame accuracy, edit score and segmental F1@k.
//! - [`pipeline`]: feature/label files, synthetic data, training and
//!   inference.
//!
//! Runnable walkthroughs live in `examples/`; the `msbatn` binary wraps the
//! pipeline for command-line use.

pub mod attention;
mod binio;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod segments;
pub mod seqcore;

pub use error::{Error, Result};
