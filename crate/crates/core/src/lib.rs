//! Feed-forward network training with standard backpropagation and the
//! consequentialism weight update, which replaces each layer's `Xᵀ` in the
//! weight gradient by the ridge right-pseudoinverse `(XᵀX + λI)⁻¹ Xᵀ` of
//! its mini-batch input. LMS and NLMS fall out as single-layer special cases.
//!
//! Gradient transforms, step rules and experiments are trait objects held
//! in name-keyed registries so the CLI can pick them from a config file.

pub mod config;
pub mod conv;
pub mod data;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod nn;
pub mod optim;
mod rng;

pub use error::{Error, Result};
pub use linalg::Matrix;
