use std::fmt;
use std::sync::Arc;

use super::gaussian::GaussianPrior;
use crate::error::{Error, Result};
use crate::tensor::linalg::matvec;

/// Black-box denoiser `x -> D_ε(x)`.
pub type DenoiseFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Denoiser for noise variance `ε`, used by PnP-ULA through Tweedie's
/// identity `ε ∇log p_ε(x) = D_ε(x) − x`.
#[derive(Clone)]
pub enum Denoiser {
    /// Exact MMSE denoiser for the prior `N(m, Σ)`.
    GaussianMmse {
        prior: GaussianPrior,
        /// `N(m, Σ + εI)`; its precision drives [`Denoiser::residual`].
        smoothed: GaussianPrior,
        eps: f64,
    },
    External {
        eps: f64,
        f: DenoiseFn,
    },
}

impl fmt::Debug for Denoiser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Denoiser::GaussianMmse { eps, prior, .. } => f
                .debug_struct("GaussianMmse")
                .field("dim", &prior.dim())
                .field("eps", eps)
                .finish(),
            Denoiser::External { eps, .. } => f.debug_struct("External").field("eps", eps).finish(),
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("denoiser eps {eps} must be positive")))
    }
}

impl Denoiser {
    pub fn gaussian_mmse(prior: GaussianPrior, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        let smoothed = prior.smoothed(eps)?;
        Ok(Denoiser::GaussianMmse { prior, smoothed, eps })
    }

    pub fn external(eps: f64, f: DenoiseFn) -> Result<Self> {
        check_eps(eps)?;
        Ok(Denoiser::External { eps, f })
    }

    pub fn eps(&self) -> f64 {
        match self {
            Denoiser::GaussianMmse { eps, .. } | Denoiser::External { eps, .. } => *eps,
        }
    }

    /// `D_ε(x)`. The Gaussian case evaluates `m + Σ(Σ + εI)⁻¹(x − m)`.
    pub fn denoise(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Denoiser::GaussianMmse { prior, smoothed, .. } => {
                if x.len() != prior.dim() {
                    return Err(Error::ShapeMismatch {
                        expected: vec![prior.dim()],
                        got: vec![x.len()],
                    });
                }
                let n = prior.dim();
                let w = smoothed.whiten(x);
                let s = matvec(prior.covariance(), n, n, &w);
                Ok(prior.mean().iter().zip(s).map(|(m, v)| m + v).collect())
            }
            Denoiser::External { f, .. } => {
                let out = f(x)?;
                if out.len() != x.len() {
                    return Err(Error::ShapeMismatch {
                        expected: vec![x.len()],
                        got: vec![out.len()],
                    });
                }
                Ok(out)
            }
        }
    }

    /// `D_ε(x) − x`. For the Gaussian case this is evaluated directly as
    /// `−ε(Σ + εI)⁻¹(x − m)`, which is algebraically identical.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Denoiser::GaussianMmse { smoothed, eps, .. } => {
                if x.len() != smoothed.dim() {
                    return Err(Error::ShapeMismatch {
                        expected: vec![smoothed.dim()],
                        got: vec![x.len()],
                    });
                }
                Ok(smoothed.whiten(x).into_iter().map(|w| -(eps * w)).collect())
            }
            Denoiser::External { .. } => {
                let d = self.denoise(x)?;
                Ok(d.iter().zip(x).map(|(a, b)| a - b).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_prior_halves_at_unit_noise() {
        let p = GaussianPrior::diagonal(vec![0.0; 3], &[1.0; 3]).unwrap();
        let d = Denoiser::gaussian_mmse(p, 1.0).unwrap();
        let x = [0.8, -1.2, 3.0];
        for (a, b) in d.denoise(&x).unwrap().iter().zip([0.4, -0.6, 1.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn vanishing_noise_is_identity() {
        let p = GaussianPrior::new(vec![0.5, -1.0], vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        let d = Denoiser::gaussian_mmse(p, 1e-12).unwrap();
        let x = [1.7, 0.2];
        for (a, b) in d.denoise(&x).unwrap().iter().zip(x) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn external_residual() {
        let f: DenoiseFn = Arc::new(|x: &[f64]| Ok(x.iter().map(|v| 0.5 * v).collect()));
        let d = Denoiser::external(0.1, f).unwrap();
        assert_eq!(d.residual(&[2.0, -4.0]).unwrap(), vec![-1.0, 2.0]);
        assert!(Denoiser::external(0.0, Arc::new(|x: &[f64]| Ok(x.to_vec()))).is_err());
    }
}
