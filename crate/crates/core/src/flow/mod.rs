//! Normalizing flows with exact log-densities and analytic scores.

pub mod certify;
pub mod checkpoint;
pub mod layer;
pub mod mlp;
pub mod model;
pub mod train;

pub use certify::{
    certify_lipschitz, certify_with_probes, empirical_hessian_bound, hessian_spectral_norm, hessian_spectral_norm_fd,
    CertificationReport, LayerVerdict,
};
pub use checkpoint::{flow_from_checkpoint, flow_to_checkpoint, load_flow, save_flow, Checkpoint};
pub use layer::{CouplingMask, FlowLayer};
pub use mlp::{Activation, MlpSubnet};
pub use model::{base_log_density, FlowGradient, FlowModel};
pub use train::{train_flow, Dataset, TrainConfig, Trainer, TrainingTrace};
