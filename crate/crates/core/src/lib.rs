//! Micro-expression recognition from video clips: robust sparse/low-rank
//! decomposition, integral projections, spatiotemporal LBP descriptors,
//! Laplacian-score group selection and chi-square kernel SVMs.

pub mod cache;
pub mod classify;
#[cfg(feature = "cli")]
pub mod cli;
pub mod dataset;
pub mod descriptor;
pub mod encoding;
pub mod error;
mod par;
pub mod pipeline;
pub mod projection;
pub mod rpca;
pub mod selection;
mod serde_float;

pub use error::{Error, ErrorClass, Result};
