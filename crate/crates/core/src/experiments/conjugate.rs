//! Linear-Gaussian toy target: `A = I`, Gaussian noise, Gaussian prior.
//! Its posterior is Gaussian with closed-form moments.

use std::sync::Arc;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::diagnostics::wasserstein1_1d;
use crate::error::{Error, Result};
use crate::likelihood::{Likelihood, NoiseModel};
use crate::operators::make_identity;
use crate::priors::gaussian::spd_inverse;
use crate::priors::{GaussianPrior, Prior};
use crate::samplers::{kernel_step, run_chain, BoxSet, ChainState, KernelKind, PriorTerm, SamplerConfig};
use crate::tensor::linalg::matvec;
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Debug)]
pub struct ConjugateGaussian {
    pub dim: usize,
    pub sigma: f64,
    pub prior_mean: Vec<f64>,
    pub prior_cov: Vec<f64>,
    pub y: Vec<f64>,
}

/// Random `d x d` orthogonal matrix (Gram–Schmidt on Gaussian columns).
fn random_orthogonal(d: usize, rng: &mut Rng) -> Vec<f64> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
        for u in &q {
            let p: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= p * ui);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            q.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    (0..d * d).map(|k| q[k % d][k / d]).collect()
}

impl ConjugateGaussian {
    /// Prior covariance `Q diag(λ) Qᵀ` with eigenvalues uniform in
    /// `eig_range` and a random rotation; mean `N(0, 0.25 I)`; `y` drawn
    /// from the model with noise level `sigma`.
    pub fn random(dim: usize, sigma: f64, eig_range: (f64, f64), seed: u64) -> Result<Self> {
        if dim == 0 || !(sigma > 0.0) || !(0.0 < eig_range.0 && eig_range.0 <= eig_range.1) {
            return Err(Error::invalid("bad conjugate target parameters"));
        }
        let mut rng = Rng::new(seed, 0);
        let q = random_orthogonal(dim, &mut rng);
        let eig: Vec<f64> = (0..dim).map(|_| rng.uniform_range(eig_range.0, eig_range.1)).collect();
        let mut cov = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let v: f64 = (0..dim).map(|k| q[i * dim + k] * eig[k] * q[j * dim + k]).sum();
                cov[i * dim + j] = v;
                cov[j * dim + i] = v;
            }
        }
        let mean: Vec<f64> = (0..dim).map(|_| 0.5 * rng.gaussian()).collect();
        let prior = GaussianPrior::new(mean.clone(), cov.clone())?;
        let l = crate::tensor::linalg::cholesky(prior.covariance(), dim)?;
        let z: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
        let y = (0..dim)
            .map(|i| mean[i] + (0..=i).map(|k| l[i * dim + k] * z[k]).sum::<f64>() + sigma * rng.gaussian())
            .collect();
        Ok(ConjugateGaussian {
            dim,
            sigma,
            prior_mean: mean,
            prior_cov: cov,
            y,
        })
    }

    /// The default four-dimensional target. The well-conditioned,
    /// high-precision spectrum keeps the step-size bias of a `t = 200` run
    /// above its Monte Carlo error.
    pub fn standard(seed: u64) -> Result<Self> {
        Self::random(4, 1.0, (0.01, 0.0125), seed)
    }

    pub fn prior(&self) -> Result<Prior> {
        Ok(Prior::GaussianAnalytic(GaussianPrior::new(
            self.prior_mean.clone(),
            self.prior_cov.clone(),
        )?))
    }

    pub fn likelihood(&self) -> Result<Likelihood> {
        Likelihood::new(
            NoiseModel::Gaussian { sigma: self.sigma },
            Arc::new(make_identity(&[self.dim])),
            Tensor::vector(self.y.clone())?,
        )
    }

    /// `(Σ⁻¹ + I/σ²)⁻¹` and `(Σ⁻¹ + I/σ²)⁻¹(Σ⁻¹m + y/σ²)`.
    pub fn posterior(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim;
        let (p, _) = spd_inverse(&self.prior_cov, d)?;
        let s2 = self.sigma * self.sigma;
        let mut post_prec = p.clone();
        for i in 0..d {
            post_prec[i * d + i] += 1.0 / s2;
        }
        let (post_cov, _) = spd_inverse(&post_prec, d)?;
        let pm = matvec(&p, d, d, &self.prior_mean);
        let rhs: Vec<f64> = pm.iter().zip(&self.y).map(|(a, y)| a + y / s2).collect();
        Ok((matvec(&post_cov, d, d, &rhs), post_cov))
    }

    /// NF-ULA settings with an inactive box: `δ`, horizon `t = Kδ`,
    /// `burn_in_time` of it discarded.
    pub fn sampler_config(&self, delta: f64, horizon: f64, burn_in_time: f64, seed: u64) -> SamplerConfig {
        let iterations = (horizon / delta).round() as usize;
        SamplerConfig {
            kind: KernelKind::NfUla,
            delta,
            alpha: 1.0,
            lambda: 1.0,
            projection: BoxSet::uniform(-1e6, 1e6).expect("valid box"),
            monitor: BoxSet::uniform(-1e6, 1e6).expect("valid box"),
            iterations,
            burn_in: (burn_in_time / delta).round() as usize,
            seed,
            ..Default::default()
        }
    }
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_means_se(series: &[f64], n_batches: usize) -> Result<f64> {
    let b = series.len() / n_batches.max(2);
    if b == 0 {
        return Err(Error::invalid("series shorter than the number of batches"));
    }
    let k = series.len() / b;
    let means: Vec<f64> = (0..k)
        .map(|i| series[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / k as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (k as f64 - 1.0);
    Ok((var / k as f64).sqrt())
}

/// Synchronously coupled chains (shared noise) started `separation` apart.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionResult {
    /// `‖X¹_k − X²_k‖` for `k = 0, 1, ...` until the tolerance is reached.
    pub distances: Vec<f64>,
    pub steps_to_tol: Option<usize>,
    /// `exp(slope)` of the least-squares fit of `ln ‖X¹_k − X²_k‖` on `k`.
    pub rate: f64,
    pub r_squared: f64,
}

pub fn coupled_contraction(
    target: &ConjugateGaussian,
    cfg: &SamplerConfig,
    separation: f64,
    max_steps: usize,
    tol: f64,
) -> Result<ContractionResult> {
    let lik = target.likelihood()?;
    let prior = target.prior()?;
    let d = target.dim;
    let x1 = Tensor::vector(target.y.clone())?;
    let mut rng = Rng::new(cfg.seed, cfg.stream ^ 0x5eed);
    let mut dir: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
    let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v *= separation / n);
    let x2 = Tensor::vector(x1.data().iter().zip(&dir).map(|(a, b)| a + b).collect())?;
    let mut c1 = ChainState::new(&x1, Rng::new(cfg.seed, cfg.stream));
    let mut c2 = ChainState::new(&x2, Rng::new(cfg.seed, cfg.stream));
    let dist = |a: &ChainState, b: &ChainState| a.x.iter().zip(&b.x).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let mut distances = vec![dist(&c1, &c2)];
    let mut steps_to_tol = None;
    for k in 1..=max_steps {
        kernel_step(&mut c1, &lik, PriorTerm::Prior(&prior), cfg)?;
        kernel_step(&mut c2, &lik, PriorTerm::Prior(&prior), cfg)?;
        let dk = dist(&c1, &c2);
        distances.push(dk);
        if dk <= tol {
            steps_to_tol = Some(k);
            break;
        }
    }
    let pts: Vec<(f64, f64)> = distances
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(k, &v)| (k as f64, v.ln()))
        .collect();
    let (slope, r_squared) = linear_fit(&pts);
    Ok(ContractionResult {
        distances,
        steps_to_tol,
        rate: slope.exp(),
        r_squared,
    })
}

/// Least-squares slope and `R²` of `y` on `x`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// W1 between a sample and `N(mean, sd²)`, pairing order statistics with
/// the normal quantiles at `(i + 1/2)/n`.
pub fn w1_to_normal(samples: &[f64], mean: f64, sd: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let normal = Normal::new(mean, sd).map_err(|e| Error::invalid(e.to_string()))?;
    let n = samples.len();
    let q: Vec<f64> = (0..n)
        .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
        .collect();
    wasserstein1_1d(samples, &q)
}

/// W1 distance between each empirical coordinate marginal of an NF-ULA
/// run (step `delta`, time `horizon`, first 5% discarded) and the exact
/// posterior marginal.
pub fn marginal_biases(target: &ConjugateGaussian, delta: f64, horizon: f64, seed: u64) -> Result<Vec<f64>> {
    let cfg = target.sampler_config(delta, horizon, 0.05 * horizon, seed);
    let lik = target.likelihood()?;
    let prior = target.prior()?;
    let x0 = Tensor::vector(target.y.clone())?;
    let (_, store) = run_chain(&cfg, &lik, PriorTerm::Prior(&prior), &x0)?;
    let (mean, cov) = target.posterior()?;
    let d = target.dim;
    (0..d)
        .map(|i| w1_to_normal(&store.marginal(i)?, mean[i], cov[i * d + i].sqrt()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_columns() {
        let q = random_orthogonal(5, &mut Rng::new(2, 0));
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..5).map(|k| q[k * 5 + i] * q[k * 5 + j]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariance_spectrum_in_range() {
        let t = ConjugateGaussian::standard(0).unwrap();
        let trace: f64 = (0..4).map(|i| t.prior_cov[i * 5]).sum();
        assert!((0.04..=0.05).contains(&trace));
        let (_, post) = t.posterior().unwrap();
        assert!(post.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn fit_on_exact_geometric() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, (0.9f64).powi(k).ln())).collect();
        let (s, r2) = linear_fit(&pts);
        assert!((s.exp() - 0.9).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_means_of_iid() {
        let mut rng = Rng::new(9, 0);
        let s: Vec<f64> = (0..100_000).map(|_| rng.gaussian()).collect();
        let se = batch_means_se(&s, 50).unwrap();
        assert!((se - 1.0 / (100_000f64).sqrt()).abs() < 0.4 / (100_000f64).sqrt());
    }
}
