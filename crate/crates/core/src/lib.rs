//! Ambiguity-aware salient-segmentation training sandbox.
//!
//! End to end: a procedural generator of ambiguous salient-object scenes, a
//! multi-modal labeler that decodes masks from corrupted proxy views, a
//! multi-mask student network trained with winner-take-all losses, a
//! rule-based quality-filtering pipeline, an iterative hard-category
//! resampling loop, and the standard SOD metric suite — each piece verified
//! against closed-form oracles and finite differences.

pub mod curation;
pub mod diffcore;
pub mod error;
pub mod gradcheck;
pub mod iterloop;
pub mod mask;
pub mod metrics;
pub mod netmodel;
pub mod objective;
pub mod scenegen;
pub mod shell;
pub mod util;

pub use error::{Error, Result};
