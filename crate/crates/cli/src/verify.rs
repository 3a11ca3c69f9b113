//! Self-contained verification suites on toy targets. Failures are
//! collected as check rows, never raised.

use nfula::diagnostics::{acf, verify_finite_moments, verify_well_posedness, DiagnosticsReport, WellPosednessSettings};
use nfula::experiments::{batch_means_se, coupled_contraction, marginal_biases, ConjugateGaussian};
use nfula::priors::{GaussianPrior, Prior};
use nfula::samplers::{run_chain, PriorTerm};
use nfula::{Rng, Tensor};

pub const SUITES: [&str; 6] = [
    "conjugate-gaussian",
    "contraction",
    "bias-scaling",
    "moments",
    "well-posedness",
    "acf",
];

pub fn run_suites(names: &[&str], seed: u64) -> DiagnosticsReport {
    let mut r = DiagnosticsReport::new();
    for name in names {
        let res = match *name {
            "conjugate-gaussian" => conjugate_gaussian(&mut r, seed),
            "contraction" => contraction(&mut r, seed),
            "bias-scaling" => bias_scaling(&mut r, seed),
            "moments" => moments(&mut r),
            "well-posedness" => well_posedness(&mut r),
            "acf" => acf_suite(&mut r, seed),
            other => Err(nfula::Error::InvalidArgument(format!("unknown suite {other:?}"))),
        };
        if let Err(e) = res {
            eprintln!("{name}: {e}");
            r.add_check(&format!("{name}.error"), false, &[]);
        }
    }
    r
}

/// Sample mean within 3 batch-means standard errors of the exact
/// posterior mean; covariance within 10% of `sqrt(c_ii c_jj)`.
fn conjugate_gaussian(r: &mut DiagnosticsReport, seed: u64) -> nfula::Result<()> {
    let t = ConjugateGaussian::standard(seed)?;
    let (mean, cov) = t.posterior()?;
    let cfg = t.sampler_config(1e-3, 200.0, 10.0, seed);
    let (_, store) = run_chain(
        &cfg,
        &t.likelihood()?,
        PriorTerm::Prior(&t.prior()?),
        &Tensor::vector(t.y.clone())?,
    )?;
    let d = t.dim;
    let marg: Vec<Vec<f64>> = (0..d).map(|i| store.marginal(i)).collect::<nfula::Result<_>>()?;
    let n = marg[0].len() as f64;
    let mu: Vec<f64> = marg.iter().map(|v| v.iter().sum::<f64>() / n).collect();
    let mut max_z: f64 = 0.0;
    for i in 0..d {
        max_z = max_z.max((mu[i] - mean[i]).abs() / batch_means_se(&marg[i], 50)?);
    }
    let mut max_cov: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let c = marg[i]
                .iter()
                .zip(&marg[j])
                .map(|(a, b)| (a - mu[i]) * (b - mu[j]))
                .sum::<f64>()
                / (n - 1.0);
            max_cov = max_cov.max((c - cov[i * d + j]).abs() / (cov[i * d + i] * cov[j * d + j]).sqrt());
        }
    }
    r.add_check("conjugate_mean", max_z <= 3.0, &[("max_z", max_z)]);
    r.add_check("conjugate_cov", max_cov <= 0.1, &[("max_rel_err", max_cov)]);
    Ok(())
}

fn contraction(r: &mut DiagnosticsReport, seed: u64) -> nfula::Result<()> {
    let t = ConjugateGaussian::standard(seed)?;
    let cfg = t.sampler_config(1e-3, 100.0, 0.0, seed);
    let c = coupled_contraction(&t, &cfg, 10.0, 100_000, 1e-6)?;
    let steps = c.steps_to_tol.map_or(f64::NAN, |s| s as f64);
    r.add_check(
        "contraction",
        c.steps_to_tol.is_some() && c.rate < 1.0 && c.r_squared >= 0.9,
        &[("rate", c.rate), ("r_squared", c.r_squared), ("steps_to_tol", steps)],
    );
    Ok(())
}

/// First-marginal W1 to the exact posterior at t = 200, averaged over five
/// seeds, must not increase as the step size halves.
fn bias_scaling(r: &mut DiagnosticsReport, seed: u64) -> nfula::Result<()> {
    let t = ConjugateGaussian::standard(seed)?;
    let deltas = [4e-3, 2e-3, 1e-3];
    let mut w = Vec::new();
    for delta in deltas {
        let mut acc = 0.0;
        for s in 0..5 {
            acc += marginal_biases(&t, delta, 200.0, seed * 100 + s)?[0];
        }
        w.push(acc / 5.0);
    }
    r.add_check(
        "bias_scaling",
        w[0] >= w[1] && w[1] >= w[2],
        &[
            ("w1_delta_4e-3", w[0]),
            ("w1_delta_2e-3", w[1]),
            ("w1_delta_1e-3", w[2]),
        ],
    );
    Ok(())
}

fn moments(r: &mut DiagnosticsReport) -> nfula::Result<()> {
    for (i, (lambda, lo, hi)) in [(1.0, 0.0, 0.0), (0.5, 0.0, 1.0), (0.1, -1.0, 2.0)]
        .into_iter()
        .enumerate()
    {
        match verify_finite_moments(lambda, lo, hi, 4) {
            Ok(m) => {
                let m4 = m.moments.last().map_or(f64::NAN, |v| v.value);
                r.add_check(
                    &format!("moments_{i}"),
                    m4.is_finite(),
                    &[("lambda", lambda), ("m4", m4)],
                );
            }
            Err(e) => {
                eprintln!("moments_{i}: {e}");
                r.add_check(&format!("moments_{i}"), false, &[("lambda", lambda)]);
            }
        }
    }
    Ok(())
}

fn well_posedness(r: &mut DiagnosticsReport) -> nfula::Result<()> {
    let prior = Prior::GaussianAnalytic(GaussianPrior::diagonal(vec![0.0], &[1.0])?);
    let pairs: Vec<(f64, f64)> = [1e-1, 1e-2, 1e-3].iter().map(|d| (0.3, 0.3 + d)).collect();
    let rep = verify_well_posedness(&prior, 0.5, &pairs, &WellPosednessSettings::default())?;
    r.add_check(
        "well_posedness",
        rep.bounded && rep.slope_ratio <= 1.05,
        &[
            ("slope_ratio", rep.slope_ratio),
            ("lipschitz_estimate", rep.lipschitz_estimate),
        ],
    );
    Ok(())
}

fn acf_suite(r: &mut DiagnosticsReport, seed: u64) -> nfula::Result<()> {
    let mut rng = Rng::new(seed, 9);
    let white: Vec<f64> = (0..100_000).map(|_| rng.gaussian()).collect();
    let w = acf(&white, 50)?;
    let max_w = w[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    r.add_check("acf_white_noise", max_w <= 0.02, &[("max_abs_acf", max_w)]);
    let mut x = rng.gaussian() / (1.0f64 - 0.81).sqrt();
    let ar: Vec<f64> = (0..100_000)
        .map(|_| {
            x = 0.9 * x + rng.gaussian();
            x
        })
        .collect();
    let a = acf(&ar, 5)?;
    r.add_check("acf_ar1", (a[5] - 0.9f64.powi(5)).abs() <= 0.03, &[("acf_lag5", a[5])]);
    Ok(())
}
