//! Acceptance suite: eleven criteria with pinned tolerances, one PASS/FAIL
//! line each. Every criterion runs twice; the second run must reproduce the
//! first bit for bit (criterion 11).

use std::f64::consts::PI;
use std::hash::{DefaultHasher, Hasher};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

use nfula::diagnostics::{acf, verify_finite_moments, verify_well_posedness, WellPosednessSettings};
use nfula::experiments::{
    batch_means_se, coupled_contraction, patch_prior, train_patch_flow, ConjugateGaussian, DeskProblem, PatchFlowSpec,
};
use nfula::flow::{certify_lipschitz, empirical_hessian_bound, Dataset, FlowModel, TrainConfig, Trainer};
use nfula::likelihood::{Likelihood, NoiseModel};
use nfula::operators::{make_identity, make_radon};
use nfula::priors::{Denoiser, GaussianPrior, PatchPrior, Prior, ScoreFn};
use nfula::samplers::{posterior_summaries, run_chain, BoxSet, KernelKind, PriorTerm, SampleStore, SamplerConfig};
use nfula::{Error, Rng, Tensor};

/// Seed of the conjugate target shared by criteria 1, 5 and 6.
const TARGET_SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
    hash: DefaultHasher,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            detail: String::new(),
            hash: DefaultHasher::new(),
        }
    }

    fn check(&mut self, ok: bool, what: String) {
        if !ok {
            self.pass = false;
        }
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(&what);
        if !ok {
            self.detail.push_str(" [FAILED]");
        }
    }

    fn record(&mut self, values: &[f64]) {
        for v in values {
            self.hash.write_u64(v.to_bits());
        }
    }

    fn record_store(&mut self, store: &SampleStore) {
        self.hash.write(&store.to_bytes().expect("store bytes"));
    }

    fn within(&mut self, elapsed: Duration, limit_s: f64) {
        let s = elapsed.as_secs_f64();
        self.check(s <= limit_s, format!("runtime {s:.1}s <= {limit_s}s"));
    }
}

fn gaussian_posterior_oracle(t: &ConjugateGaussian) -> (DVector<f64>, DMatrix<f64>) {
    let d = t.dim;
    let sigma_inv = DMatrix::from_row_slice(d, d, &t.prior_cov)
        .try_inverse()
        .expect("invertible");
    let post_prec = &sigma_inv + DMatrix::identity(d, d) / (t.sigma * t.sigma);
    let post_cov = post_prec.try_inverse().expect("invertible");
    let rhs =
        &sigma_inv * DVector::from_column_slice(&t.prior_mean) + DVector::from_column_slice(&t.y) / (t.sigma * t.sigma);
    (&post_cov * rhs, post_cov)
}

fn c1_conjugate_recovery() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let t = ConjugateGaussian::standard(TARGET_SEED).unwrap();
    let (mean, cov) = gaussian_posterior_oracle(&t);
    let cfg = t.sampler_config(1e-3, 200.0, 10.0, 11);
    let (_, store) = run_chain(
        &cfg,
        &t.likelihood().unwrap(),
        PriorTerm::Prior(&t.prior().unwrap()),
        &Tensor::vector(t.y.clone()).unwrap(),
    )
    .unwrap();
    let d = t.dim;
    let marg: Vec<Vec<f64>> = (0..d).map(|i| store.marginal(i).unwrap()).collect();
    let n = marg[0].len() as f64;
    let mu: Vec<f64> = marg.iter().map(|v| v.iter().sum::<f64>() / n).collect();
    let mut worst_z: f64 = 0.0;
    for i in 0..d {
        let se = batch_means_se(&marg[i], 50).unwrap();
        worst_z = worst_z.max((mu[i] - mean[i]).abs() / se);
    }
    let mut worst_c: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let c = marg[i]
                .iter()
                .zip(&marg[j])
                .map(|(a, b)| (a - mu[i]) * (b - mu[j]))
                .sum::<f64>()
                / (n - 1.0);
            worst_c = worst_c.max((c - cov[(i, j)]).abs() / (cov[(i, i)] * cov[(j, j)]).sqrt());
        }
    }
    o.record_store(&store);
    o.check(worst_z <= 3.0, format!("max |mean err|/SE = {worst_z:.3} <= 3"));
    o.check(worst_c <= 0.10, format!("max cov err rel = {worst_c:.4} <= 0.10"));
    o.within(start.elapsed(), 120.0);
    o
}

struct TrainedGaussianFlow {
    model: FlowModel,
}

fn c2_flow_equivalence(out: &mut Option<TrainedGaussianFlow>) -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let m = [1.0, -0.5];
    let c = [1.0, 0.6, 0.6, 0.8];
    let chol = DMatrix::from_row_slice(2, 2, &c).cholesky().unwrap().l();
    let mut rng = Rng::new(20, 0);
    let rows: Vec<Vec<f64>> = (0..10_000)
        .map(|_| {
            let z = DVector::from_vec(vec![rng.gaussian(), rng.gaussian()]);
            let x = &chol * z;
            vec![m[0] + x[0], m[1] + x[1]]
        })
        .collect();
    let data = Dataset::from_rows(&rows).unwrap();
    let mut model = FlowModel::additive(2, 4, &mut Rng::new(21, 0)).unwrap();
    let mut trainer = Trainer::new(
        &model,
        TrainConfig {
            epochs: 150,
            batch_size: 256,
            lr: 2e-3,
            jitter_sigma: 0.0,
            seed: 22,
        },
    )
    .unwrap();
    trainer.run(&mut model, &data, usize::MAX).unwrap();
    o.check(certify_lipschitz(&model).certified, "trained flow certified".into());
    let lik = Likelihood::new(
        NoiseModel::Gaussian { sigma: 0.5 },
        Arc::new(make_identity(&[2])),
        Tensor::vector(vec![0.5, 0.0]).unwrap(),
    )
    .unwrap();
    let flow_prior = Prior::Flow(Arc::new(model.clone()));
    let gauss = Prior::GaussianAnalytic(GaussianPrior::new(m.to_vec(), c.to_vec()).unwrap());
    let cfg = |kind| SamplerConfig {
        kind,
        delta: 1e-2,
        alpha: 1.0,
        lambda: 1.0,
        projection: BoxSet::uniform(-1e6, 1e6).unwrap(),
        monitor: BoxSet::uniform(-1e6, 1e6).unwrap(),
        iterations: 100_000,
        burn_in: 1000,
        seed: 23,
        ..Default::default()
    };
    let x0 = Tensor::vector(vec![0.5, 0.0]).unwrap();
    let (_, s_flow) = run_chain(&cfg(KernelKind::NfUla), &lik, PriorTerm::Prior(&flow_prior), &x0).unwrap();
    let (_, s_ula) = run_chain(&cfg(KernelKind::Ula), &lik, PriorTerm::Prior(&gauss), &x0).unwrap();
    let w = sorted_w1(&s_flow.marginal(0).unwrap(), &s_ula.marginal(0).unwrap());
    o.record(&model.params_flat());
    o.record_store(&s_flow);
    o.record_store(&s_ula);
    o.check(w <= 0.05, format!("W1(first marginals) = {w:.5} <= 0.05"));
    o.within(start.elapsed(), 300.0);
    *out = Some(TrainedGaussianFlow { model });
    o
}

/// W1 of two equal-size samples: mean gap of order statistics.
fn sorted_w1(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let v = x[i];
            xp[i] = v + h;
            let fp = f(&xp);
            xp[i] = v - h;
            let fm = f(&xp);
            xp[i] = v;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn c3_gradient_oracles() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let mut rng = Rng::new(30, 0);
    let (mut total, mut passed, mut worst) = (0usize, 0usize, 0.0f64);
    let mut tally = |e: f64, o: &mut Outcome| {
        total += 1;
        if e <= 1e-4 {
            passed += 1;
        }
        worst = worst.max(e);
        o.record(&[e]);
    };

    let mut flow = FlowModel::additive(6, 3, &mut Rng::new(31, 0)).unwrap();
    flow.perturb(0.5, true, &mut Rng::new(32, 0));
    for _ in 0..20 {
        let x: Vec<f64> = (0..6).map(|_| rng.gaussian()).collect();
        let (_, g) = flow.log_density_and_grad(&x).unwrap();
        let fd = fd_grad(|v| flow.log_density_slice(v).unwrap(), &x, 1e-6);
        tally(rel_err(&g, &fd), &mut o);
    }

    for affine in [false, true] {
        let mut m = FlowModel::coupled(
            4,
            2,
            Some(&[8, 8]),
            nfula::flow::Activation::Relu,
            affine,
            &mut Rng::new(33, 0),
        )
        .unwrap();
        m.perturb(0.5, true, &mut Rng::new(34, 0));
        let batch: Vec<Tensor> = (0..8)
            .map(|_| Tensor::vector((0..4).map(|_| rng.gaussian()).collect()).unwrap())
            .collect();
        let (_, grad) = m.nll_loss_and_grad(&batch).unwrap();
        let p0 = m.params_flat();
        let loss = |p: &[f64]| {
            let mut mm = m.clone();
            mm.set_params_flat(p).unwrap();
            mm.nll_loss_and_grad(&batch).unwrap().0
        };
        let fd = fd_grad(loss, &p0, 1e-6);
        tally(rel_err(&grad.flat(), &fd), &mut o);
    }

    let op = Arc::new(make_radon(8, 6, 0.0, PI, None).unwrap());
    let x_true: Vec<f64> = (0..64).map(|_| rng.uniform()).collect();
    let y = op.apply(&Tensor::new(vec![8, 8], x_true).unwrap()).unwrap();
    let lik = Likelihood::new(NoiseModel::Poisson { n0: 4096.0, mu: 0.05 }, op, y).unwrap();
    for _ in 0..10 {
        let x: Vec<f64> = (0..64).map(|_| rng.uniform()).collect();
        let g = lik.grad_log_likelihood_slice(&x).unwrap();
        let fd = fd_grad(|v| lik.log_likelihood_slice(v).unwrap(), &x, 1e-5);
        tally(rel_err(&g, &fd), &mut o);
    }

    let mut pflow = FlowModel::additive(16, 3, &mut Rng::new(35, 0)).unwrap();
    pflow.perturb(0.3, true, &mut Rng::new(36, 0));
    let pp = PatchPrior::new(Arc::new(pflow), 10, 10, 4, 3).unwrap();
    for _ in 0..5 {
        let x: Vec<f64> = (0..100).map(|_| rng.uniform()).collect();
        let mut g = vec![0.0; 100];
        pp.grad_into(&x, &mut g).unwrap();
        let fd = fd_grad(|v| pp.log_density(v).unwrap(), &x, 1e-6);
        tally(rel_err(&g, &fd), &mut o);
    }

    o.check(
        passed == total,
        format!("{passed}/{total} FD checks, worst rel err {worst:.2e} <= 1e-4"),
    );
    o.within(start.elapsed(), 60.0);
    o
}

fn hessian_ratio(model: &FlowModel, n_dirs: usize) -> (f64, f64) {
    let d = model.dim();
    let mut rng = Rng::new(40, d as u64);
    let dirs: Vec<Vec<f64>> = (0..n_dirs)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.into_iter().map(|a| a / n).collect()
        })
        .collect();
    let probes = |r: f64| -> Vec<Tensor> {
        dirs.iter()
            .map(|u| Tensor::vector(u.iter().map(|a| a * r).collect()).unwrap())
            .collect()
    };
    let b10 = empirical_hessian_bound(model, &probes(10.0), 1e-5).unwrap();
    let b1000 = empirical_hessian_bound(model, &probes(1000.0), 1e-5).unwrap();
    (b10, b1000)
}

fn c4_certification(trained: &FlowModel) -> Outcome {
    let mut o = Outcome::new();
    let (patch_flow, _) = train_patch_flow(&PatchFlowSpec::default()).unwrap();
    for (name, m) in [("2D Gaussian flow", trained), ("4x4 patch flow", &patch_flow)] {
        let cert = certify_lipschitz(m).certified;
        let (b10, b1000) = hessian_ratio(m, 32);
        o.record(&[b10, b1000]);
        o.check(cert, format!("{name} certified"));
        o.check(
            b1000 / b10 <= 1.01,
            format!(
                "{name} bound r=10: {b10:.6}, r=1e3: {b1000:.6}, ratio {:.4} <= 1.01",
                b1000 / b10
            ),
        );
    }
    // Untrained random couplings: reported, not graded.
    let mut random = FlowModel::additive(4, 3, &mut Rng::new(41, 0)).unwrap();
    random.perturb(0.1, true, &mut Rng::new(42, 0));
    let (b10, b1000) = hessian_ratio(&random, 32);
    o.record(&[b10, b1000]);
    o.check(
        certify_lipschitz(&random).certified,
        format!(
            "random 4D additive certified (bound ratio {:.4}, informational)",
            b1000 / b10
        ),
    );
    let affine = FlowModel::affine(4, 3, &mut Rng::new(43, 0)).unwrap();
    o.check(!certify_lipschitz(&affine).certified, "affine certified=false".into());
    o
}

fn c5_contraction() -> Outcome {
    let mut o = Outcome::new();
    let t = ConjugateGaussian::standard(TARGET_SEED).unwrap();
    let cfg = t.sampler_config(1e-3, 100.0, 0.0, 50);
    let r = coupled_contraction(&t, &cfg, 10.0, 100_000, 1e-6).unwrap();
    o.record(&r.distances);
    o.check(
        (r.distances[0] - 10.0).abs() < 1e-12,
        format!("initial separation {:.6}", r.distances[0]),
    );
    o.check(
        r.steps_to_tol.is_some(),
        format!("separation <= 1e-6 after {:?} steps (limit 1e5)", r.steps_to_tol),
    );
    o.check(r.rate < 1.0, format!("fitted rate r = {:.6} < 1", r.rate));
    o.check(r.r_squared >= 0.9, format!("R^2 = {:.6} >= 0.9", r.r_squared));
    o
}

fn c6_bias_ordering() -> Outcome {
    let mut o = Outcome::new();
    let t = ConjugateGaussian::standard(TARGET_SEED).unwrap();
    let (mean, cov) = gaussian_posterior_oracle(&t);
    let normal = Normal::new(mean[0], cov[(0, 0)].sqrt()).unwrap();
    let lik = t.likelihood().unwrap();
    let prior = t.prior().unwrap();
    let x0 = Tensor::vector(t.y.clone()).unwrap();
    let mut w = Vec::new();
    for delta in [4e-3, 2e-3, 1e-3] {
        let mut acc = 0.0;
        for seed in 0..5 {
            let cfg = t.sampler_config(delta, 200.0, 10.0, 60 + seed);
            let (_, store) = run_chain(&cfg, &lik, PriorTerm::Prior(&prior), &x0).unwrap();
            let mut s = store.marginal(0).unwrap();
            s.sort_by(f64::total_cmp);
            let n = s.len() as f64;
            let d: f64 = s
                .iter()
                .enumerate()
                .map(|(i, v)| (v - normal.inverse_cdf((i as f64 + 0.5) / n)).abs())
                .sum();
            acc += d / n;
        }
        w.push(acc / 5.0);
    }
    o.record(&w);
    o.check(
        w[0] >= w[1] && w[1] >= w[2],
        format!(
            "W1 at delta 4e-3/2e-3/1e-3 = {:.5}/{:.5}/{:.5} non-increasing",
            w[0], w[1], w[2]
        ),
    );
    o
}

fn c7_projection() -> Outcome {
    let mut o = Outcome::new();
    let d = 4;
    let score: ScoreFn = Arc::new(|x: &[f64], out: &mut [f64]| {
        out.copy_from_slice(x);
        Ok(())
    });
    let prior = Prior::External { dim: d, score };
    let lik = Likelihood::new(
        NoiseModel::Gaussian { sigma: 1.0 },
        Arc::new(make_identity(&[d])),
        Tensor::filled(&[d], 0.5),
    )
    .unwrap();
    let delta = 1e-4;
    let base = SamplerConfig {
        kind: KernelKind::NfUla,
        delta,
        alpha: 3.0,
        lambda: 2e-4,
        projection: BoxSet::uniform(0.0, 1.0).unwrap(),
        iterations: 100_000,
        burn_in: 99_999,
        seed: 70,
        ..Default::default()
    };
    let x0 = Tensor::filled(&[d], 0.5);
    let (state, _) = run_chain(&base, &lik, PriorTerm::Prior(&prior), &x0).unwrap();
    let bound = 1.0 + 10.0 * (2.0 * delta).sqrt();
    o.record(&state.x);
    o.check(
        state.max_abs <= bound,
        format!("projected max |X|_inf = {:.6} <= {bound:.6}", state.max_abs),
    );
    let free = SamplerConfig {
        kind: KernelKind::Ula,
        ..base
    };
    match run_chain(&free, &lik, PriorTerm::Prior(&prior), &x0) {
        Err(abort) => {
            let fired = matches!(abort.error, Error::Diverged { max_abs, .. } if max_abs > 1e6);
            o.record(&[abort.state.iteration as f64]);
            o.check(
                fired,
                format!("unprojected chain diverged at iteration {}", abort.state.iteration),
            );
        }
        Ok((s, _)) => o.check(false, format!("unprojected chain stayed bounded: {:.3e}", s.max_abs)),
    }
    o
}

fn psnr_oracle(x: &Tensor, r: &Tensor) -> f64 {
    let mse = x.data().iter().zip(r.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    10.0 * (1.0 / mse).log10()
}

fn c8_desk_problems() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let spec = PatchFlowSpec::default();
    let (model, _) = train_patch_flow(&spec).unwrap();
    o.record(&model.params_flat());
    let train_time = start.elapsed();
    let prior = patch_prior(Arc::new(model), spec.side, spec.patch, 2).unwrap();
    let cfg = SamplerConfig {
        kind: KernelKind::NfUla,
        delta: 5e-5,
        alpha: 1.0,
        lambda: 5e-5,
        iterations: 20_000,
        burn_in: 4_000,
        seed: 80,
        ..Default::default()
    };
    let problems = [
        (DeskProblem::deblur(32, 0.02, 81).unwrap(), 3.0, "deblur vs observation"),
        (
            DeskProblem::inpaint(32, 0.2, 0.02, 82).unwrap(),
            5.0,
            "inpaint vs zero-filled",
        ),
        (
            DeskProblem::limited_angle_ct(32, 30, 0.05, 83).unwrap(),
            2.0,
            "limited-angle CT vs FBP",
        ),
    ];
    for (p, margin, name) in problems {
        let t0 = Instant::now();
        let (summary, store) = run_chain(&cfg, &p.likelihood, PriorTerm::Prior(&prior), &p.x0).unwrap();
        let (mean, _) = posterior_summaries(&store).unwrap();
        o.check(
            summary.projection_activations == 0,
            format!(
                "{name}: {} projection activations, monitor escaped = {}, max |x| = {:.3}",
                summary.projection_activations, summary.escaped, summary.max_abs
            ),
        );
        let base = psnr_oracle(&p.baseline, &p.x_true);
        let got = psnr_oracle(&mean, &p.x_true);
        o.record(mean.data());
        o.check(
            got >= base + margin,
            format!("{name}: {got:.2} dB >= {base:.2} + {margin} dB"),
        );
        o.within(t0.elapsed() + train_time, 600.0);
    }
    o
}

fn c9_tweedie() -> Outcome {
    let mut o = Outcome::new();
    let d = 8;
    let mut rng = Rng::new(90, 0);
    let a = DMatrix::from_fn(d, d, |_, _| rng.gaussian());
    let cov = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1;
    let cov_rows: Vec<f64> = (0..d * d).map(|k| cov[(k / d, k % d)]).collect();
    let mean: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
    let eps = 0.0625;
    let prior = GaussianPrior::new(mean.clone(), cov_rows).unwrap();
    let den = Denoiser::gaussian_mmse(prior.clone(), eps).unwrap();
    let smoothed_prec = (&cov + DMatrix::identity(d, d) * eps).try_inverse().unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..d).map(|_| 3.0 * rng.gaussian()).collect();
        let r = DVector::from_iterator(d, x.iter().zip(&mean).map(|(a, b)| a - b));
        let score = -(&smoothed_prec * r) * eps;
        let dx = den.denoise(&x).unwrap();
        for i in 0..d {
            worst = worst.max((score[i] - (dx[i] - x[i])).abs());
        }
    }
    o.record(&[worst]);
    o.check(
        worst <= 1e-10,
        format!("max |eps*score - (D(x) - x)| = {worst:.2e} <= 1e-10"),
    );

    let lik = Likelihood::new(
        NoiseModel::Gaussian { sigma: 0.7 },
        Arc::new(make_identity(&[d])),
        Tensor::vector((0..d).map(|_| rng.gaussian()).collect()).unwrap(),
    )
    .unwrap();
    let smoothed = Prior::GaussianAnalytic(prior.smoothed(eps).unwrap());
    let cfg = |kind| SamplerConfig {
        kind,
        delta: 1e-3,
        alpha: 1.3,
        lambda: 1.0,
        projection: BoxSet::uniform(-1e6, 1e6).unwrap(),
        iterations: 5000,
        seed: 91,
        ..Default::default()
    };
    let x0 = Tensor::zeros(&[d]);
    let (s_pnp, st_pnp) = run_chain(&cfg(KernelKind::PnpUla), &lik, PriorTerm::Denoiser(&den), &x0).unwrap();
    let (s_ula, st_ula) = run_chain(&cfg(KernelKind::Ula), &lik, PriorTerm::Prior(&smoothed), &x0).unwrap();
    let same_final = s_pnp.x.iter().zip(&s_ula.x).all(|(a, b)| a.to_bits() == b.to_bits());
    let same_path = st_pnp.to_bytes().unwrap() == st_ula.to_bytes().unwrap();
    o.record_store(&st_pnp);
    o.check(
        same_final && same_path,
        "PnP-ULA and ULA-on-smoothed-prior trajectories bit-identical".into(),
    );
    o
}

fn c10_theory_checks() -> Outcome {
    let mut o = Outcome::new();
    for (lambda, lo, hi) in [(1.0, 0.0, 0.0), (0.5, 0.0, 1.0), (0.1, -1.0, 2.0)] {
        match verify_finite_moments(lambda, lo, hi, 4) {
            Ok(r) => {
                let m0 = r.moments[0].value;
                let exact = (hi - lo) + (2.0 * PI * lambda).sqrt();
                o.record(&r.moments.iter().map(|m| m.value).collect::<Vec<_>>());
                o.check(
                    r.moments.len() == 5 && (m0 - exact).abs() <= 1e-6,
                    format!(
                        "moments k<=4 converge for C=[{lo},{hi}], lambda={lambda} (k=0 err {:.1e})",
                        (m0 - exact).abs()
                    ),
                );
            }
            Err(e) => o.check(false, format!("moments C=[{lo},{hi}], lambda={lambda}: {e}")),
        }
    }

    let prior = Prior::GaussianAnalytic(GaussianPrior::diagonal(vec![0.0], &[1.0]).unwrap());
    let sigma = 0.5;
    let y = 0.3;
    let pairs: Vec<(f64, f64)> = [1e-1, 1e-2, 1e-3].iter().map(|d| (y, y + d)).collect();
    let rep = verify_well_posedness(&prior, sigma, &pairs, &WellPosednessSettings::default()).unwrap();
    let slopes: Vec<f64> = rep.pairs.iter().map(|p| p.slope.unwrap()).collect();
    let spread = slopes.iter().cloned().fold(0.0, f64::max) / slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    // Posterior N(y/(1+σ²), σ²/(1+σ²)); TV of equal-variance Gaussians is
    // erf(|Δm| / (2√2 s)).
    let s = (sigma * sigma / (1.0 + sigma * sigma)).sqrt();
    let tv_err = rep
        .pairs
        .iter()
        .map(|p| {
            let dm = (p.y2 - p.y1).abs() / (1.0 + sigma * sigma);
            (p.tv - erf(dm / (2.0 * 2f64.sqrt() * s))).abs()
        })
        .fold(0.0, f64::max);
    o.record(&slopes);
    o.check(
        spread <= 1.05,
        format!("TV/dy slopes {slopes:.6?} spread {spread:.5} <= 1.05"),
    );
    o.check(tv_err <= 1e-6, format!("TV vs closed form err {tv_err:.1e} <= 1e-6"));

    let mut rng = Rng::new(100, 0);
    let white: Vec<f64> = (0..100_000).map(|_| rng.gaussian()).collect();
    let w = acf(&white, 50).unwrap();
    let max_w = w[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut ar = vec![0.0; 100_000];
    let mut prev = rng.gaussian() / (1.0f64 - 0.81).sqrt();
    for v in ar.iter_mut() {
        prev = 0.9 * prev + rng.gaussian();
        *v = prev;
    }
    let a = acf(&ar, 5).unwrap();
    o.record(&w);
    o.record(&a);
    o.check(
        w[0] == 1.0 && max_w <= 0.02,
        format!("white-noise max |acf| lag 1..50 = {max_w:.4} <= 0.02"),
    );
    o.check(
        (a[5] - 0.9f64.powi(5)).abs() <= 0.03,
        format!("AR(1) acf(5) = {:.4} vs 0.59049 +- 0.03", a[5]),
    );
    o
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome, Outcome)> = Vec::new();
    let mut flow_a = None;
    let mut flow_b = None;
    let runs: Vec<(u32, &str)> = vec![
        (1, "conjugate-Gaussian posterior recovery"),
        (2, "flow-prior equivalence on Gaussian data"),
        (3, "gradient oracles"),
        (4, "certification dichotomy"),
        (5, "contraction of coupled chains"),
        (6, "bias ordering over step sizes"),
        (7, "projection efficacy"),
        (8, "desk-scale inverse problems"),
        (9, "Tweedie exactness and PnP/ULA identity"),
        (10, "theory-check suite"),
    ];
    for (id, name) in runs {
        let start = Instant::now();
        let (a, b) = match id {
            1 => (c1_conjugate_recovery(), c1_conjugate_recovery()),
            2 => (c2_flow_equivalence(&mut flow_a), c2_flow_equivalence(&mut flow_b)),
            3 => (c3_gradient_oracles(), c3_gradient_oracles()),
            4 => {
                let m = &flow_a.as_ref().expect("criterion 2 ran").model;
                (c4_certification(m), c4_certification(m))
            }
            5 => (c5_contraction(), c5_contraction()),
            6 => (c6_bias_ordering(), c6_bias_ordering()),
            7 => (c7_projection(), c7_projection()),
            8 => (c8_desk_problems(), c8_desk_problems()),
            9 => (c9_tweedie(), c9_tweedie()),
            _ => (c10_theory_checks(), c10_theory_checks()),
        };
        println!(
            "criterion {id:>2} {:<4} {name}: {} ({:.1}s for two runs)",
            if a.pass { "PASS" } else { "FAIL" },
            a.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((id, name, a, b));
    }
    let mismatched: Vec<u32> = results
        .iter()
        .filter(|(_, _, a, b)| a.hash.finish() != b.hash.finish())
        .map(|r| r.0)
        .collect();
    let det_ok = mismatched.is_empty();
    println!(
        "criterion 11 {:<4} determinism: repeated runs {}",
        if det_ok { "PASS" } else { "FAIL" },
        if det_ok {
            "byte-identical for criteria 1-10".to_string()
        } else {
            format!("differ for criteria {mismatched:?}")
        }
    );
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if !failed.is_empty() || !det_ok {
        eprintln!("acceptance failures: {failed:?}{}", if det_ok { "" } else { " + 11" });
        std::process::exit(1);
    }
}
