//! Gaussian and Poisson (transmission) measurement models.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operators::ForwardOperator;
use crate::tensor::linalg::smallest_eigenvalue_spd;
use crate::tensor::{Rng, Tensor};

/// Exponent clamp for the Poisson model: `μ·Ax` is kept within `±50`.
const POISSON_EXP_LIMIT: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseModel {
    Gaussian {
        sigma: f64,
    },
    /// Transmission counts with mean `n0 · exp(-mu · Ax)`.
    Poisson {
        n0: f64,
        mu: f64,
    },
}

impl NoiseModel {
    fn validate(&self, allow_zero_sigma: bool) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } => {
                let ok = sigma.is_finite() && (sigma > 0.0 || (allow_zero_sigma && sigma == 0.0));
                if !ok {
                    return Err(Error::invalid(format!("Gaussian sigma {sigma} must be positive")));
                }
            }
            NoiseModel::Poisson { n0, mu } => {
                if !(n0 > 0.0 && n0.is_finite() && mu > 0.0 && mu.is_finite()) {
                    return Err(Error::invalid("Poisson n0 and mu must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// `p(y | x)` for a fixed observation `y` and operator `A`.
#[derive(Clone, Debug)]
pub struct Likelihood {
    noise: NoiseModel,
    op: Arc<ForwardOperator>,
    y: Tensor,
}

impl Likelihood {
    pub fn new(noise: NoiseModel, op: Arc<ForwardOperator>, y: Tensor) -> Result<Self> {
        noise.validate(false)?;
        if y.len() != op.output_len() {
            return Err(Error::ShapeMismatch {
                expected: op.output_shape().to_vec(),
                got: y.shape().to_vec(),
            });
        }
        if !y.is_finite() {
            return Err(Error::non_finite("observation"));
        }
        Ok(Likelihood { noise, op, y })
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn operator(&self) -> &ForwardOperator {
        &self.op
    }

    pub fn operator_arc(&self) -> &Arc<ForwardOperator> {
        &self.op
    }

    pub fn observation(&self) -> &Tensor {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.op.input_len()
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.op.input_len() {
            return Err(Error::ShapeMismatch {
                expected: self.op.input_shape().to_vec(),
                got: vec![x.len()],
            });
        }
        Ok(())
    }

    /// Writes `∇ₓ log p(y|x)` into `out`.
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_x(x)?;
        let ax = self.op.apply_slice(x);
        let y = self.y.data();
        let r: Vec<f64> = match self.noise {
            NoiseModel::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                y.iter().zip(&ax).map(|(yi, a)| (yi - a) / s2).collect()
            }
            NoiseModel::Poisson { n0, mu } => {
                let lim = POISSON_EXP_LIMIT / mu;
                y.iter()
                    .zip(&ax)
                    .map(|(&yi, &a)| {
                        let a = a.clamp(-lim, lim);
                        -mu * n0 * ((-mu * yi).exp() - (-mu * a).exp())
                    })
                    .collect()
            }
        };
        self.op.adjoint_into(&r, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::non_finite("likelihood gradient"))
        }
    }

    pub fn grad_log_likelihood_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.op.input_len()];
        self.grad_into(x, &mut out)?;
        Ok(out)
    }

    pub fn grad_log_likelihood(&self, x: &Tensor) -> Result<Tensor> {
        Tensor::from_raw(
            self.op.input_shape().to_vec(),
            self.grad_log_likelihood_slice(x.data())?,
        )
    }

    /// `log p(y|x)` up to an `x`-independent constant: `-‖y-Ax‖²/(2σ²)`
    /// for Gaussian noise, `-J(x, y)` for the Poisson model.
    pub fn log_likelihood_slice(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let ax = self.op.apply_slice(x);
        let y = self.y.data();
        let v = match self.noise {
            NoiseModel::Gaussian { sigma } => {
                -y.iter().zip(&ax).map(|(yi, a)| (yi - a).powi(2)).sum::<f64>() / (2.0 * sigma * sigma)
            }
            NoiseModel::Poisson { n0, mu } => {
                let lim = POISSON_EXP_LIMIT / mu;
                -y.iter()
                    .zip(&ax)
                    .map(|(&yi, &a)| {
                        let a = a.clamp(-lim, lim);
                        n0 * (-mu * a).exp() + n0 * (-mu * yi).exp() * (mu * a - n0.ln())
                    })
                    .sum::<f64>()
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::non_finite("log-likelihood"))
        }
    }

    pub fn log_likelihood(&self, x: &Tensor) -> Result<f64> {
        self.log_likelihood_slice(x.data())
    }

    /// Lipschitz constant `‖A‖²/σ²` of the Gaussian log-likelihood
    /// gradient; `None` for the Poisson model, whose gradient is not
    /// globally Lipschitz.
    pub fn lipschitz_constant(&self) -> Result<Option<f64>> {
        match self.noise {
            NoiseModel::Gaussian { sigma } => {
                let n = self.op.operator_norm()?;
                Ok(Some(n * n / (sigma * sigma)))
            }
            NoiseModel::Poisson { .. } => Ok(None),
        }
    }

    /// Smallest eigenvalue `m_y` of `AᵀA/σ²` (Gaussian only), by inverse
    /// power iteration on the explicit matrix. Zero for singular `AᵀA`.
    pub fn contractivity_constant(&self) -> Result<Option<f64>> {
        let sigma = match self.noise {
            NoiseModel::Gaussian { sigma } => sigma,
            NoiseModel::Poisson { .. } => return Ok(None),
        };
        let d = self.op.input_len();
        let mut gram = vec![0.0; d * d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.op.adjoint_slice(&self.op.apply_slice(&e));
            for i in 0..d {
                gram[i * d + j] = col[i] / (sigma * sigma);
            }
            e[j] = 0.0;
        }
        Ok(Some(smallest_eigenvalue_spd(&gram, d, 10_000, 1e-12)?))
    }
}

/// Draws `y` for ground truth `x_true`. Gaussian: `Ax + σ·N(0, I)`.
/// Poisson: `N₁ ~ Poisson(N₀ e^{-μAx})`, zero counts raised to 1, then
/// `y = -(1/μ) log(N₁/N₀)`.
pub fn simulate_observation(noise: NoiseModel, op: &ForwardOperator, x_true: &Tensor, rng: &mut Rng) -> Result<Tensor> {
    noise.validate(true)?;
    if x_true.len() != op.input_len() {
        return Err(Error::ShapeMismatch {
            expected: op.input_shape().to_vec(),
            got: x_true.shape().to_vec(),
        });
    }
    let ax = op.apply_slice(x_true.data());
    let y: Vec<f64> = match noise {
        NoiseModel::Gaussian { sigma } => ax.iter().map(|a| a + sigma * rng.gaussian()).collect(),
        NoiseModel::Poisson { n0, mu } => ax
            .iter()
            .map(|&a| {
                let mean = n0 * (-mu * a.clamp(-POISSON_EXP_LIMIT / mu, POISSON_EXP_LIMIT / mu)).exp();
                let n1 = rng.poisson(mean).max(1.0);
                -(n1 / n0).ln() / mu
            })
            .collect(),
    };
    Tensor::new(op.output_shape().to_vec(), y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{make_blur, make_identity, motion_blur_kernel};

    fn ident(d: usize) -> Arc<ForwardOperator> {
        Arc::new(make_identity(&[d]))
    }

    #[test]
    fn gaussian_gradient_values() {
        let y = Tensor::vector(vec![2.0, 0.0]).unwrap();
        let lik = Likelihood::new(NoiseModel::Gaussian { sigma: 1.0 }, ident(2), y.clone()).unwrap();
        let g = lik.grad_log_likelihood(&Tensor::zeros(&[2])).unwrap();
        assert_eq!(g.data(), &[2.0, 0.0]);
        assert_eq!(lik.grad_log_likelihood(&y).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(lik.lipschitz_constant().unwrap(), Some(1.0));
        assert!((lik.contractivity_constant().unwrap().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn blur_lipschitz_constant() {
        let op = Arc::new(make_blur(&[16, 16], &motion_blur_kernel(9)).unwrap());
        let lik = Likelihood::new(NoiseModel::Gaussian { sigma: 0.02 }, op, Tensor::zeros(&[16, 16])).unwrap();
        let l = lik.lipschitz_constant().unwrap().unwrap();
        assert!((l - 2500.0).abs() < 2500.0 * 1e-6);
        assert!(lik.contractivity_constant().unwrap().unwrap() >= 0.0);
    }

    #[test]
    fn poisson_has_no_lipschitz_constant() {
        let lik = Likelihood::new(
            NoiseModel::Poisson { n0: 4096.0, mu: 0.05 },
            ident(3),
            Tensor::zeros(&[3]),
        )
        .unwrap();
        assert_eq!(lik.lipschitz_constant().unwrap(), None);
    }

    #[test]
    fn zero_sigma_simulation_is_exact() {
        let op = make_blur(&[8, 8], &motion_blur_kernel(3)).unwrap();
        let mut rng = Rng::new(0, 0);
        let x = Tensor::new(vec![8, 8], (0..64).map(|i| i as f64 / 64.0).collect()).unwrap();
        let y = simulate_observation(NoiseModel::Gaussian { sigma: 0.0 }, &op, &x, &mut rng).unwrap();
        assert_eq!(y, op.apply(&x).unwrap());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Likelihood::new(NoiseModel::Gaussian { sigma: 0.0 }, ident(1), Tensor::zeros(&[1])).is_err());
        assert!(Likelihood::new(NoiseModel::Gaussian { sigma: 1.0 }, ident(2), Tensor::zeros(&[3])).is_err());
    }
}
