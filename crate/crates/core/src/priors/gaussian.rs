use crate::error::{Error, Result};
use crate::tensor::linalg::{cholesky, cholesky_logdet, cholesky_solve, matvec, power_iteration_spectral_norm};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Inverse of a symmetric positive definite matrix, column by column via
/// Cholesky solves, then symmetrized.
pub(crate) fn spd_inverse(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = cholesky(a, n)?;
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = cholesky_solve(&l, n, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
        e[j] = 0.0;
    }
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    Ok((inv, l))
}

pub(crate) fn check_square(m: &[f64], n: usize, what: &str) -> Result<()> {
    if m.len() != n * n {
        return Err(Error::invalid(format!("{what} must be {n}x{n}")));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::non_finite(what.to_string()));
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (m[i * n + j], m[j * n + i]);
            if (a - b).abs() > 1e-12 * (a.abs() + b.abs()).max(1e-300) {
                return Err(Error::invalid(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

/// `N(m, Σ)` with a dense covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    cov: Vec<f64>,
    precision: Vec<f64>,
    logdet_cov: f64,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::invalid("empty Gaussian mean"));
        }
        check_square(&cov, n, "covariance")?;
        let (precision, l) = spd_inverse(&cov, n)?;
        Ok(GaussianPrior {
            logdet_cov: cholesky_logdet(&l, n),
            mean,
            cov,
            precision,
        })
    }

    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Result<Self> {
        let n = mean.len();
        if variances.len() != n {
            return Err(Error::invalid("variance vector length differs from mean"));
        }
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            cov[i * n + i] = variances[i];
        }
        Self::new(mean, cov)
    }

    /// `N(m, Σ + εI)`: the prior smoothed by Gaussian noise of variance `ε`.
    pub fn smoothed(&self, eps: f64) -> Result<Self> {
        let n = self.dim();
        let mut c = self.cov.clone();
        for i in 0..n {
            c[i * n + i] += eps;
        }
        Self::new(self.mean.clone(), c)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    pub fn precision(&self) -> &[f64] {
        &self.precision
    }

    /// `Σ⁻¹ (x - m)`.
    pub(crate) fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        matvec(&self.precision, self.dim(), self.dim(), &r)
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(self.whiten(x)) {
            *o = -w;
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let r: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let w = self.whiten(x);
        let q: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
        -0.5 * q - 0.5 * self.logdet_cov - 0.5 * self.dim() as f64 * LN_2PI
    }

    /// Largest eigenvalue of `Σ⁻¹`, the Lipschitz constant of the score.
    pub fn lipschitz_constant(&self) -> Result<f64> {
        let n = self.dim();
        let p = &self.precision;
        power_iteration_spectral_norm(|v| matvec(p, n, n, v), |v| matvec(p, n, n, v), n, 100_000, 1e-13)
    }
}
