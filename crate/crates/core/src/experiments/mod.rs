//! Reusable experiment setups: the conjugate-Gaussian toy target, coupled
//! chains, desk-scale imaging problems and the verification suites.

mod conjugate;
mod desk;

pub use conjugate::{
    batch_means_se, coupled_contraction, linear_fit, marginal_biases, w1_to_normal, ConjugateGaussian,
    ContractionResult,
};
pub use desk::{patch_dataset, patch_prior, posterior_mean, train_patch_flow, DeskProblem, PatchFlowSpec};
