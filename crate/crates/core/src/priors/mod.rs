//! Prior scores, densities and proximal maps used by the samplers.

mod denoiser;
pub(crate) mod gaussian;
mod patch;

use std::fmt;
use std::sync::Arc;

pub use denoiser::{DenoiseFn, Denoiser};
pub use gaussian::GaussianPrior;
pub use patch::{PatchGrid, PatchPrior};

use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::tensor::Tensor;

/// Black-box score `x -> ∇log p(x)` written into the output slice.
pub type ScoreFn = Arc<dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync>;

#[derive(Clone)]
pub enum Prior {
    Flow(Arc<FlowModel>),
    Patch(PatchPrior),
    GaussianAnalytic(GaussianPrior),
    /// `U(x) = weight · ‖x‖₁`, used through its proximal map.
    L1 {
        weight: f64,
    },
    /// Arbitrary score without density, e.g. a deliberately bad prior.
    External {
        dim: usize,
        score: ScoreFn,
    },
}

impl fmt::Debug for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::Flow(m) => f.debug_tuple("Flow").field(&m.dim()).finish(),
            Prior::Patch(p) => f
                .debug_struct("Patch")
                .field("patch", &p.grid().patch_size())
                .field("stride", &p.grid().stride())
                .finish(),
            Prior::GaussianAnalytic(g) => f.debug_tuple("GaussianAnalytic").field(&g.dim()).finish(),
            Prior::L1 { weight } => f.debug_struct("L1").field("weight", weight).finish(),
            Prior::External { dim, .. } => f.debug_struct("External").field("dim", dim).finish(),
        }
    }
}

impl Prior {
    pub fn l1(weight: f64) -> Result<Self> {
        if weight >= 0.0 && weight.is_finite() {
            Ok(Prior::L1 { weight })
        } else {
            Err(Error::invalid(format!("L1 weight {weight} must be nonnegative")))
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Prior::Flow(_) => "flow",
            Prior::Patch(_) => "patch",
            Prior::GaussianAnalytic(_) => "gaussian",
            Prior::L1 { .. } => "l1",
            Prior::External { .. } => "external",
        }
    }

    pub fn has_grad(&self) -> bool {
        !matches!(self, Prior::L1 { .. })
    }

    pub fn has_prox(&self) -> bool {
        matches!(self, Prior::L1 { .. })
    }

    pub fn has_density(&self) -> bool {
        matches!(self, Prior::Flow(_) | Prior::Patch(_) | Prior::GaussianAnalytic(_))
    }

    /// Ambient dimension, when the prior fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Prior::Flow(m) => Some(m.dim()),
            Prior::Patch(p) => Some(p.grid().image_len()),
            Prior::GaussianAnalytic(g) => Some(g.dim()),
            Prior::L1 { .. } => None,
            Prior::External { dim, .. } => Some(*dim),
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != n => Err(Error::ShapeMismatch {
                expected: vec![d],
                got: vec![n],
            }),
            _ => Ok(()),
        }
    }

    /// Writes `∇log p(x)` into `out`.
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(x.len())?;
        match self {
            Prior::Flow(m) => {
                let (_, g) = m.log_density_and_grad(x)?;
                out.copy_from_slice(&g);
                Ok(())
            }
            Prior::Patch(p) => p.grad_into(x, out),
            Prior::GaussianAnalytic(g) => {
                g.grad_into(x, out);
                Ok(())
            }
            Prior::L1 { .. } => Err(Error::CapabilityMissing("a gradient")),
            Prior::External { score, .. } => score(x, out),
        }
    }

    pub fn grad_log(&self, x: &Tensor) -> Result<Tensor> {
        let mut out = vec![0.0; x.len()];
        self.grad_into(x.data(), &mut out)?;
        Tensor::from_raw(x.shape().to_vec(), out)
    }

    /// `prox_{lam·U}(x)`; for the L1 prior, soft-thresholding at `lam·weight`.
    pub fn prox_into(&self, x: &[f64], lam: f64, out: &mut [f64]) -> Result<()> {
        if !(lam > 0.0 && lam.is_finite()) {
            return Err(Error::invalid(format!("prox parameter {lam} must be positive")));
        }
        match self {
            Prior::L1 { weight } => {
                let t = lam * weight;
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = v.signum() * (v.abs() - t).max(0.0);
                }
                Ok(())
            }
            _ => Err(Error::CapabilityMissing("a proximal map")),
        }
    }

    pub fn prox(&self, x: &Tensor, lam: f64) -> Result<Tensor> {
        let mut out = vec![0.0; x.len()];
        self.prox_into(x.data(), lam, &mut out)?;
        Tensor::from_raw(x.shape().to_vec(), out)
    }

    pub fn log_density_slice(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x.len())?;
        match self {
            Prior::Flow(m) => m.log_density_slice(x),
            Prior::Patch(p) => p.log_density(x),
            Prior::GaussianAnalytic(g) => Ok(g.log_density(x)),
            _ => Err(Error::CapabilityMissing("a log-density")),
        }
    }

    pub fn log_density(&self, x: &Tensor) -> Result<f64> {
        self.log_density_slice(x.data())
    }

    /// Known Lipschitz constant of the score, if one is available
    /// analytically (Gaussian priors only).
    pub fn lipschitz_constant(&self) -> Result<Option<f64>> {
        match self {
            Prior::GaussianAnalytic(g) => g.lipschitz_constant().map(Some),
            _ => Ok(None),
        }
    }
}
