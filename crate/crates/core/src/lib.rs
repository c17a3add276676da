//! Knowledge distillation by embedding graph alignment.
//!
//! A frozen teacher and a trainable student each project their penultimate
//! features into a shared embedding space. Within a mini-batch those
//! embeddings form a graph whose edges are Pearson correlations; the student
//! is trained to reproduce the teacher's graph (edge matching) and to
//! correlate instance-by-instance with the teacher (node matching).
//!
//! * [`diffcore`]: tensors, define-by-run tape, finite differences, SGD.
//! * [`models`]: teacher/student MLPs with node-embedding projections.
//! * [`ega`]: correlation graphs and the alignment, CE and KD losses.
//! * [`train`]: pre-training, simultaneous and sequential distillation.
//! * [`data`]: Gaussian mixtures, CSV input, batching, augmentation.
//! * [`gradcheck`]: finite-difference checks over every differentiable op.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diffcore;
pub mod ega;
mod error;
pub mod gradcheck;
pub mod models;
pub mod train;

pub use error::{Error, Result};
