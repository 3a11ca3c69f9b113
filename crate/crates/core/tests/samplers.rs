use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use nfula::experiments::ConjugateGaussian;
use nfula::flow::{Activation, FlowModel};
use nfula::likelihood::{Likelihood, NoiseModel};
use nfula::operators::{make_blur, make_identity, motion_blur_kernel};
use nfula::priors::{Denoiser, GaussianPrior, PatchPrior, Prior};
use nfula::samplers::{drift_field, kernel_step, run_chain, BoxSet, ChainState, KernelKind, PriorTerm, SamplerConfig};
use nfula::{Rng, Tensor};

fn scalar_likelihood(y: f64, sigma: f64) -> Likelihood {
    Likelihood::new(
        NoiseModel::Gaussian { sigma },
        Arc::new(make_identity(&[1])),
        Tensor::vector(vec![y]).unwrap(),
    )
    .unwrap()
}

fn chain_mean(cfg: &SamplerConfig, lik: &Likelihood, prior: PriorTerm<'_>, x0: f64) -> f64 {
    let (_, store) = run_chain(cfg, lik, prior, &Tensor::vector(vec![x0]).unwrap())
        .ok()
        .unwrap();
    let m = store.marginal(0).unwrap();
    m.iter().sum::<f64>() / m.len() as f64
}

#[test]
fn noiseless_ula_settles_at_posterior_mode() {
    let t = ConjugateGaussian::standard(3).unwrap();
    let d = t.dim;
    let prec = DMatrix::from_row_slice(d, d, &t.prior_cov).try_inverse().unwrap();
    let post_prec = &prec + DMatrix::identity(d, d) / (t.sigma * t.sigma);
    let rhs =
        &prec * DVector::from_column_slice(&t.prior_mean) + DVector::from_column_slice(&t.y) / (t.sigma * t.sigma);
    let mode = post_prec.try_inverse().unwrap() * rhs;

    let cfg = SamplerConfig {
        kind: KernelKind::Ula,
        delta: 1e-3,
        noise_scale: 0.0,
        ..Default::default()
    };
    let (lik, prior) = (t.likelihood().unwrap(), t.prior().unwrap());
    let mut state = ChainState::new(&Tensor::vector(t.y.clone()).unwrap(), Rng::new(0, 0));
    for _ in 0..5_000 {
        kernel_step(&mut state, &lik, PriorTerm::Prior(&prior), &cfg).unwrap();
    }
    for i in 0..d {
        assert!((state.x[i] - mode[i]).abs() <= 1e-10, "{} vs {}", state.x[i], mode[i]);
    }
}

#[test]
fn drift_lipschitz_ratio_is_bounded() {
    let sigma = 0.3;
    let op = Arc::new(make_blur(&[4, 4], &motion_blur_kernel(3)).unwrap());
    let lik = Likelihood::new(NoiseModel::Gaussian { sigma }, op, Tensor::filled(&[4, 4], 0.5)).unwrap();
    let variances: Vec<f64> = (0..16).map(|i| 0.2 + 0.05 * i as f64).collect();
    let prior = Prior::GaussianAnalytic(GaussianPrior::diagonal(vec![0.5; 16], &variances).unwrap());
    let cfg = SamplerConfig {
        kind: KernelKind::NfUla,
        delta: 1e-3,
        alpha: 2.0,
        lambda: 0.1,
        projection: BoxSet::uniform(0.0, 1.0).unwrap(),
        ..Default::default()
    };
    let bound = lik.lipschitz_constant().unwrap().unwrap()
        + cfg.alpha * prior.lipschitz_constant().unwrap().unwrap()
        + 1.0 / cfg.lambda
        + 1e-6;
    let mut rng = Rng::new(5, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a: Vec<f64> = (0..16).map(|_| 0.5 + 2.0 * rng.gaussian()).collect();
        let b: Vec<f64> = (0..16).map(|_| 0.5 + 2.0 * rng.gaussian()).collect();
        let da = drift_field(&a, &lik, PriorTerm::Prior(&prior), &cfg).unwrap();
        let db = drift_field(&b, &lik, PriorTerm::Prior(&prior), &cfg).unwrap();
        let num: f64 = da.iter().zip(&db).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    assert!(worst <= bound, "{worst} > {bound}");
}

fn patch_setup() -> (Likelihood, Prior, Tensor) {
    let mut rng = Rng::new(7, 0);
    let mut m = FlowModel::coupled(4, 2, None, Activation::Relu, false, &mut rng).unwrap();
    m.perturb(0.1, true, &mut rng);
    let prior = Prior::Patch(PatchPrior::new(Arc::new(m), 6, 6, 2, 1).unwrap());
    let x0 = Tensor::new(vec![6, 6], (0..36).map(|_| rng.uniform()).collect()).unwrap();
    let op = Arc::new(make_blur(&[6, 6], &motion_blur_kernel(3)).unwrap());
    let lik = Likelihood::new(NoiseModel::Gaussian { sigma: 0.1 }, op, x0.clone()).unwrap();
    (lik, prior, x0)
}

#[test]
fn equal_seeds_repeat_bitwise() {
    let (lik, prior, x0) = patch_setup();
    let cfg = |seed| SamplerConfig {
        delta: 1e-4,
        lambda: 1e-3,
        iterations: 300,
        burn_in: 50,
        seed,
        ..Default::default()
    };
    let run = |seed| {
        let (_, store) = run_chain(&cfg(seed), &lik, PriorTerm::Prior(&prior), &x0).ok().unwrap();
        store.to_bytes().unwrap()
    };
    assert_eq!(run(11), run(11));
    assert_ne!(run(11), run(12));
}

#[test]
fn outward_score_activates_projection() {
    let prior = Prior::External {
        dim: 2,
        score: Arc::new(|x: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = 50.0 * v;
            }
            Ok(())
        }),
    };
    let lik = Likelihood::new(
        NoiseModel::Gaussian { sigma: 10.0 },
        Arc::new(make_identity(&[2])),
        Tensor::vector(vec![0.0, 0.0]).unwrap(),
    )
    .unwrap();
    let cfg = SamplerConfig {
        delta: 1e-3,
        lambda: 1e-3,
        projection: BoxSet::uniform(-1.0, 1.0).unwrap(),
        monitor: BoxSet::uniform(-1.0, 1.0).unwrap(),
        iterations: 5_000,
        prior_lipschitz: Some(50.0),
        ..Default::default()
    };
    let (state, _) = run_chain(
        &cfg,
        &lik,
        PriorTerm::Prior(&prior),
        &Tensor::vector(vec![0.1, -0.1]).unwrap(),
    )
    .ok()
    .unwrap();
    assert!(state.projection_activations > 0);
    assert!(state.escaped);
    assert!(state.max_abs < 2.0, "{}", state.max_abs);
}

#[test]
fn pnp_with_gaussian_denoiser_targets_smoothed_posterior() {
    let (y, eps) = (1.0, 0.05);
    let den = Denoiser::gaussian_mmse(GaussianPrior::diagonal(vec![0.0], &[1.0]).unwrap(), eps).unwrap();
    let lik = scalar_likelihood(y, 1.0);
    let cfg = SamplerConfig {
        kind: KernelKind::PnpUla,
        delta: 1e-2,
        lambda: 1.0,
        projection: BoxSet::uniform(-100.0, 100.0).unwrap(),
        monitor: BoxSet::uniform(-100.0, 100.0).unwrap(),
        iterations: 200_000,
        burn_in: 1_000,
        ..Default::default()
    };
    let mean = chain_mean(&cfg, &lik, PriorTerm::Denoiser(&den), 0.0);
    let v = 1.0 + eps;
    let expected = y * v / (v + 1.0);
    assert!((mean - expected).abs() <= 0.03, "{mean} vs {expected}");
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn myula_l1_mean_matches_quadrature() {
    let (y, sigma, w) = (0.4, 0.5, 2.0);
    let density = |x: f64| (-(x - y).powi(2) / (2.0 * sigma * sigma) - w * x.abs()).exp();
    let z = simpson(density, -10.0, 10.0, 200_000);
    let expected = simpson(|x| x * density(x), -10.0, 10.0, 200_000) / z;

    let prior = Prior::l1(w).unwrap();
    let lik = scalar_likelihood(y, sigma);
    let cfg = SamplerConfig {
        kind: KernelKind::MyUla,
        delta: 1e-3,
        iterations: 400_000,
        burn_in: 2_000,
        seed: 3,
        ..Default::default()
    };
    let mean = chain_mean(&cfg, &lik, PriorTerm::Prior(&prior), y);
    assert!((mean - expected).abs() <= 0.02, "{mean} vs {expected}");
}
