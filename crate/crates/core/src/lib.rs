//! Relational knowledge distillation.
//!
//! A self-contained engine for distilling embedding models: a define-by-run
//! reverse-mode autodiff tape over dense `f64` matrices, distance-wise and
//! angle-wise relational losses, the individual-distillation baselines they
//! are compared against (Hinton KD, projected L2, triplet, cross-entropy),
//! MLP teacher/student embedders, optimizers, class-balanced batching,
//! distance-weighted triplet sampling, the training loop, synthetic data and
//! retrieval evaluation.
//!
//! The crate is `no_std` (with `alloc`). File formats, configuration files and
//! the command-line interface live in the `rkd` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod data;
pub mod divergence;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod math;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod relational;
pub mod sampling;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tape::{Tape, Var};

/// Lower clamp used by every guarded square root, logarithm, norm and
/// normalizer in the crate.
pub const EPS: f64 = 1e-12;
