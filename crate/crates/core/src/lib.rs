//! Normalizing-flow priors and projected Langevin samplers for Bayesian
//! imaging inverse problems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod format;
pub mod image_io;
pub mod likelihood;
pub mod operators;
pub mod priors;
pub mod samplers;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Rng, SparseMatrix, Tensor};
