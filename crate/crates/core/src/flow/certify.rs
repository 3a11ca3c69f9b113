use super::layer::FlowLayer;
use super::mlp::Activation;
use super::model::FlowModel;
use crate::error::{Error, Result};
use crate::tensor::linalg::{power_iteration_spectral_norm, symmetric_eigenvalues};
use crate::tensor::Tensor;

const HESSIAN_POWER_ITERS: usize = 2000;
const HESSIAN_POWER_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerVerdict {
    pub index: usize,
    pub kind: &'static str,
    pub ok: bool,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificationReport {
    pub certified: bool,
    pub reasons: Vec<LayerVerdict>,
    /// Filled in when probes are supplied (see [`certify_with_probes`]).
    pub empirical_hessian_bound: Option<f64>,
}

/// Structural check that `∇ log q` is globally Lipschitz: every coupling is
/// additive with ReLU-only subnets, every scale is an ActNorm constant.
pub fn certify_lipschitz(model: &FlowModel) -> CertificationReport {
    let reasons: Vec<LayerVerdict> = model
        .layers()
        .iter()
        .enumerate()
        .map(|(index, layer)| {
            let (ok, reason) = match layer {
                FlowLayer::AdditiveCoupling { subnet, .. } => match subnet.activation() {
                    Activation::Relu => (true, "additive coupling with ReLU subnet".to_string()),
                    Activation::Tanh => (
                        false,
                        "additive coupling with smooth activation: subnet derivatives are not piecewise constant"
                            .to_string(),
                    ),
                },
                FlowLayer::AffineCoupling { .. } => (
                    false,
                    "affine coupling: input-dependent scale makes the score non-Lipschitz in general".to_string(),
                ),
                FlowLayer::ActNorm { .. } => (true, "constant per-coordinate scale".to_string()),
                FlowLayer::Permutation { .. } => (true, "permutation".to_string()),
            };
            LayerVerdict {
                index,
                kind: layer.kind_name(),
                ok,
                reason,
            }
        })
        .collect();
    CertificationReport {
        certified: reasons.iter().all(|r| r.ok),
        reasons,
        empirical_hessian_bound: None,
    }
}

/// Spectral norm of `∇² log q` at `x`. For certified flows `T⁻¹` is
/// piecewise affine, so `∇² log q = -JᵀJ` almost everywhere and the norm is
/// the top eigenvalue of `JᵀJ` at the activation pattern of `x`. Other
/// models fall back to [`hessian_spectral_norm_fd`].
pub fn hessian_spectral_norm(model: &FlowModel, x: &[f64], fd_step: f64) -> Result<f64> {
    if !certify_lipschitz(model).certified {
        return hessian_spectral_norm_fd(model, x, fd_step);
    }
    let d = model.dim();
    let j = model.jacobian(x)?;
    let mut jtj = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..=a {
            let v: f64 = (0..d).map(|k| j[k * d + a] * j[k * d + b]).sum();
            jtj[a * d + b] = v;
            jtj[b * d + a] = v;
        }
    }
    let ev = symmetric_eigenvalues(&jtj, d)?;
    Ok(ev[d - 1].max(0.0))
}

/// Spectral norm of `∇² log q` at `x` from central finite-difference
/// Hessian–vector products inside power iteration.
pub fn hessian_spectral_norm_fd(model: &FlowModel, x: &[f64], fd_step: f64) -> Result<f64> {
    if !(fd_step > 0.0) {
        return Err(Error::invalid("fd_step must be positive"));
    }
    let d = model.dim();
    let hvp = |v: &[f64]| -> Vec<f64> {
        let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + fd_step * b).collect();
        let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - fd_step * b).collect();
        match (model.log_density_and_grad(&xp), model.log_density_and_grad(&xm)) {
            (Ok((_, gp)), Ok((_, gm))) => gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * fd_step)).collect(),
            _ => vec![f64::NAN; d],
        }
    };
    // The finite-difference Hessian is symmetric only up to O(h²); both
    // roles of the power iteration use the same product.
    let norm = power_iteration_spectral_norm(&hvp, &hvp, d, HESSIAN_POWER_ITERS, HESSIAN_POWER_TOL)?;
    if !norm.is_finite() {
        return Err(Error::non_finite("Hessian-vector product"));
    }
    Ok(norm)
}

/// Maximum over `probes` of the spectral norm of `∇² log q`.
pub fn empirical_hessian_bound(model: &FlowModel, probes: &[Tensor], fd_step: f64) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Empty);
    }
    let mut best: f64 = 0.0;
    for p in probes {
        if p.len() != model.dim() {
            return Err(Error::ShapeMismatch {
                expected: vec![model.dim()],
                got: p.shape().to_vec(),
            });
        }
        best = best.max(hessian_spectral_norm(model, p.data(), fd_step)?);
    }
    Ok(best)
}

pub fn certify_with_probes(model: &FlowModel, probes: &[Tensor], fd_step: f64) -> Result<CertificationReport> {
    let mut r = certify_lipschitz(model);
    r.empirical_hessian_bound = Some(empirical_hessian_bound(model, probes, fd_step)?);
    Ok(r)
}
