//! BiMind: a dual-head text classifier with retrieval-augmented evidence.
//!
//! The crate is organised bottom-up: a small f64 tensor engine with
//! reverse-mode differentiation, text processing, a semantic memory bank,
//! an attention-geometry-adapted transformer encoder, the dual-head model
//! with its fusion modes and agreement objective, diagnostics, and the
//! training pipeline that ties them together for the CLI.

pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod memory;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
