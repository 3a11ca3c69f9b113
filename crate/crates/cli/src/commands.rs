//! Subcommand implementations. Every number printed or written as text
//! uses `%.17g`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use rayon::prelude::*;

use nfula::diagnostics::{
    acf, chain_acf_bands, psnr, wasserstein1_1d, AcfCurve, BandAcf, DiagnosticsReport, DEFAULT_MAX_LAG,
};
use nfula::flow::{
    certify_lipschitz, empirical_hessian_bound, flow_from_checkpoint, flow_to_checkpoint, Checkpoint, FlowModel,
    TrainConfig, Trainer,
};
use nfula::format::g17;
use nfula::priors::{PatchPrior, Prior};
use nfula::samplers::{
    posterior_summaries, run_chain, step_bound, BoxSet, KernelKind, PriorTerm, SampleStore, SamplerConfig, TraceRow,
};
use nfula::tensor::{read_nft, write_nft};
use nfula::{Rng, Tensor};

use crate::config::{Coupling, ExperimentConfig, PriorKind, Problem};
use crate::problem::{self, load_problem, training_data, STREAM_INIT, STREAM_NOISE};
use crate::verify::{run_suites, SUITES};
use crate::CliError;

/// Checkpoint entry recording the patch side a flow was trained on (0 for
/// whole images).
pub const META_PATCH: &str = "meta.patch";

fn kv(key: &str, value: f64) {
    println!("{key} = {}", g17(value));
}

fn write_config(dir: &Path, name: &str, cfg: &ExperimentConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), cfg.to_text())?;
    Ok(())
}

pub fn degrade(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let x_true = problem::ground_truth(cfg)?;
    let op = problem::operator(cfg, x_true.shape(), None)?;
    let noise = problem::noise_model(cfg);
    let y = nfula::likelihood::simulate_observation(noise, &op, &x_true, &mut Rng::new(cfg.seed, STREAM_NOISE))?;
    let dir = &cfg.data;
    fs::create_dir_all(dir)?;
    write_nft(dir.join("x_true.nft"), &x_true)?;
    write_nft(dir.join("y.nft"), &y)?;
    let mut desc = format!(
        "kind = {}\ninput_shape = {:?}\noutput_shape = {:?}\n",
        op.kind_name(),
        op.input_shape(),
        op.output_shape()
    );
    if let nfula::operators::OperatorKind::Mask { keep } = op.kind() {
        write_nft(
            dir.join("mask.nft"),
            &Tensor::new(op.input_shape().to_vec(), keep.clone())?,
        )?;
    }
    if let Some(g) = op.radon_geometry() {
        desc.push_str(&format!(
            "n_angles = {}\nn_detectors = {}\nangle_lo = {}\nangle_hi = {}\n",
            g.n_angles,
            g.n_detectors,
            g17(g.angle_lo),
            g17(g.angle_hi)
        ));
    }
    fs::write(dir.join("operator.txt"), desc)?;
    write_config(dir, "config.txt", cfg)?;
    let x0 = problem::initial_point(cfg, &op, &y)?;
    if cfg.problem == Problem::Ct {
        write_nft(dir.join("fbp.nft"), &x0)?;
    }
    println!("problem = {}", cfg.problem.name());
    println!("operator = {}", op.kind_name());
    if x0.shape() == x_true.shape() {
        kv("baseline_psnr", psnr(&x0, &x_true, 1.0)?);
    }
    Ok(())
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, g17(*l)));
    }
    s
}

/// Sidecar path next to a checkpoint, e.g. `flow.nfck` -> `flow.loss.csv`.
pub fn sidecar(checkpoint: &Path, suffix: &str) -> PathBuf {
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("flow");
    checkpoint.with_file_name(format!("{stem}.{suffix}"))
}

pub fn train_flow(cfg: &ExperimentConfig, resume: bool, max_epochs: Option<usize>) -> Result<(), CliError> {
    let data = training_data(cfg)?;
    let path = &cfg.checkpoint;
    let (mut model, mut trainer) = if resume {
        let ck = Checkpoint::load(path)?;
        let model = flow_from_checkpoint(&ck)?;
        if model.dim() != data.dim() {
            return Err(CliError::Usage(format!(
                "checkpoint flow has dimension {}, training data {}",
                model.dim(),
                data.dim()
            )));
        }
        let trainer = Trainer::load_state(&model, &ck, Some(cfg.epochs))?;
        (model, trainer)
    } else {
        let mut rng = Rng::new(cfg.seed, STREAM_INIT);
        let model = match cfg.coupling {
            Coupling::Additive => FlowModel::additive(data.dim(), cfg.n_couplings, &mut rng)?,
            Coupling::Affine => FlowModel::affine(data.dim(), cfg.n_couplings, &mut rng)?,
        };
        let train = TrainConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            jitter_sigma: cfg.jitter,
            seed: cfg.seed,
        };
        let trainer = Trainer::new(&model, train)?;
        (model, trainer)
    };
    trainer.run(&mut model, &data, max_epochs.unwrap_or(usize::MAX))?;
    let mut ck = flow_to_checkpoint(&model);
    trainer.save_state(&mut ck);
    let patch = if cfg.problem == Problem::Toy2d { 0 } else { cfg.patch };
    ck.insert_scalar(META_PATCH, patch as f64);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    ck.save(path)?;
    fs::write(sidecar(path, "loss.csv"), loss_csv(&trainer.trace().epoch_loss))?;
    fs::write(sidecar(path, "config.txt"), cfg.to_text())?;
    println!("dim = {}", model.dim());
    println!("samples = {}", data.len());
    println!("epochs_done = {}", trainer.epochs_done());
    if let Some(l) = trainer.trace().epoch_loss.last() {
        kv("final_loss", *l);
    }
    println!("certified = {}", certify_lipschitz(&model).certified);
    Ok(())
}

fn build_prior(cfg: &ExperimentConfig, image_shape: &[usize]) -> Result<Prior, CliError> {
    if cfg.prior == PriorKind::L1 {
        return Ok(Prior::l1(cfg.l1_weight)?);
    }
    let ck = Checkpoint::load(&cfg.checkpoint)?;
    let model = Arc::new(flow_from_checkpoint(&ck)?);
    match cfg.prior {
        PriorKind::Flow => Ok(Prior::Flow(model)),
        PriorKind::Patch => {
            let [h, w] = image_shape else {
                return Err(CliError::Usage("patch priors need 2D images".into()));
            };
            let p = (model.dim() as f64).sqrt().round() as usize;
            if p * p != model.dim() {
                return Err(CliError::Usage(format!(
                    "flow dimension {} is not a square patch",
                    model.dim()
                )));
            }
            if let Some(t) = ck.get(META_PATCH) {
                if t.data().first() != Some(&(p as f64)) {
                    return Err(CliError::Usage("checkpoint was not trained on patches".into()));
                }
            }
            Ok(Prior::Patch(PatchPrior::new(model, *h, *w, p, cfg.stride)?))
        }
        PriorKind::L1 => unreachable!(),
    }
}

pub fn sampler_config(cfg: &ExperimentConfig) -> Result<SamplerConfig, CliError> {
    Ok(SamplerConfig {
        kind: cfg.kind,
        delta: cfg.delta,
        alpha: cfg.alpha,
        lambda: cfg.lambda,
        projection: BoxSet::uniform(cfg.box_lo, cfg.box_hi)?,
        monitor: BoxSet::uniform(cfg.monitor_lo, cfg.monitor_hi)?,
        iterations: cfg.iterations,
        burn_in: cfg.burn_in,
        thinning: cfg.thinning,
        seed: cfg.seed,
        prox_lambda: (cfg.prox_lambda > 0.0).then_some(cfg.prox_lambda),
        trace_every: cfg.trace_every,
        memory_budget: cfg.memory_mb << 20,
        ..Default::default()
    })
}

fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("iteration,psnr,log_likelihood,projection_active\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.iteration,
            r.psnr.map(g17).unwrap_or_default(),
            g17(r.log_likelihood),
            r.projection_active as u8
        ));
    }
    s
}

struct ChainOutcome {
    dir: PathBuf,
    lines: Vec<String>,
    error: Option<String>,
}

pub fn sample(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.kind == KernelKind::PnpUla {
        return Err(CliError::Usage(
            "pnp-ula needs a denoiser, which is only available through the library API".into(),
        ));
    }
    if cfg.chains == 0 {
        return Err(CliError::Usage("sampler.chains must be at least 1".into()));
    }
    let loaded = load_problem(cfg)?;
    let prior = build_prior(cfg, loaded.x0.shape())?;
    let mut base = sampler_config(cfg)?;
    base.reference = loaded.x_true.clone();
    base.validate()?;
    write_config(&cfg.output, "config.txt", cfg)?;
    let outcomes: Vec<Result<ChainOutcome, CliError>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let dir = if cfg.chains == 1 {
                cfg.output.clone()
            } else {
                cfg.output.join(format!("chain_{c:03}"))
            };
            let chain_dir = dir.join("chain");
            if chain_dir.exists() {
                fs::remove_dir_all(&chain_dir)?;
            }
            fs::create_dir_all(&chain_dir)?;
            let sc = SamplerConfig {
                stream: c as u64,
                spill_dir: Some(chain_dir),
                ..base.clone()
            };
            let (state, mut store, error) =
                match run_chain(&sc, &loaded.likelihood, PriorTerm::Prior(&prior), &loaded.x0) {
                    Ok((s, st)) => (s, st, None),
                    Err(a) => {
                        let a = *a;
                        (a.state, a.store, Some(a.error.to_string()))
                    }
                };
            store.spill()?;
            fs::write(dir.join("trace.csv"), trace_csv(&state.trace))?;
            let mut lines = vec![
                format!("samples = {}", store.len()),
                format!("iterations = {}", state.iteration),
                format!("max_abs = {}", g17(state.max_abs)),
                format!("escaped = {}", state.escaped),
                format!("projection_activations = {}", state.projection_activations),
            ];
            lines.extend(state.warnings.iter().map(|w| format!("warning = {w}")));
            if !store.is_empty() {
                let (mean, std) = posterior_summaries(&store)?;
                write_nft(dir.join("mean.nft"), &mean)?;
                write_nft(dir.join("std.nft"), &std)?;
                if let Some(x) = &loaded.x_true {
                    lines.push(format!("psnr_mean = {}", g17(psnr(&mean, x, 1.0)?)));
                    if loaded.x0.shape() == x.shape() {
                        lines.push(format!("psnr_x0 = {}", g17(psnr(&loaded.x0, x, 1.0)?)));
                    }
                }
            }
            Ok(ChainOutcome { dir, lines, error })
        })
        .collect();
    let mut failures = Vec::new();
    for o in outcomes {
        let o = o?;
        println!("[{}]", o.dir.display());
        for l in &o.lines {
            println!("{l}");
        }
        if let Some(e) = o.error {
            println!("error = {e}");
            failures.push(format!("{}: {e}", o.dir.display()));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("chain aborted: {}", failures.join("; "))))
    }
}

#[derive(Args, Debug, Clone)]
pub struct CertifyArgs {
    /// NFCK checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Lipschitz constant of the likelihood gradient.
    #[arg(long, default_value_t = 1.0)]
    pub l_y: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5e-5)]
    pub lambda: f64,
    /// Random probe directions per radius.
    #[arg(long, default_value_t = 32)]
    pub probes: usize,
    /// Probe radii.
    #[arg(long, value_delimiter = ',', default_value = "1,10,1000")]
    pub radii: Vec<f64>,
    #[arg(long, default_value_t = 1e-5)]
    pub fd_step: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Probes `r·u` for `n` random unit directions `u`.
pub fn radial_probes(dim: usize, n: usize, r: f64, rng: &mut Rng) -> Vec<Tensor> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            Tensor::from_raw(vec![dim], v.into_iter().map(|a| r * a / norm).collect()).expect("shape")
        })
        .collect()
}

pub fn certify(a: &CertifyArgs) -> Result<(), CliError> {
    let model = flow_from_checkpoint(&Checkpoint::load(&a.checkpoint)?)?;
    let report = certify_lipschitz(&model);
    println!("certified = {}", report.certified);
    for r in &report.reasons {
        println!(
            "layer.{:03} = {} {}: {}",
            r.index,
            r.kind,
            if r.ok { "ok" } else { "FAIL" },
            r.reason
        );
    }
    if a.probes == 0 || a.radii.is_empty() {
        return Ok(());
    }
    let mut overall: f64 = 0.0;
    for &r in &a.radii {
        // Same directions at every radius.
        let probes = radial_probes(model.dim(), a.probes, r, &mut Rng::new(a.seed, 0));
        let b = empirical_hessian_bound(&model, &probes, a.fd_step)?;
        kv(&format!("hessian_bound.r{}", g17(r)), b);
        overall = overall.max(b);
    }
    kv("empirical_hessian_bound", overall);
    kv("step_bound", step_bound(a.l_y, a.alpha, overall, a.lambda)?);
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct DiagnoseArgs {
    /// Directory of chain_*.nft chunks written by `sample`.
    #[arg(long)]
    pub chain: PathBuf,
    /// Ground truth for PSNR.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Output CSV (`metric,band,dim,lag,value`).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
    pub max_lag: usize,
    /// Random coordinates per wavelet band.
    #[arg(long, default_value_t = 8)]
    pub dims_per_band: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// ACF of evenly spaced raw coordinates, for chains that are not 2D images.
fn coordinate_acf(store: &SampleStore, n: usize, max_lag: usize) -> Result<BandAcf, CliError> {
    let d = store.sample_shape().iter().product::<usize>();
    let k = n.clamp(1, d);
    let mut curves = Vec::new();
    let mut degenerate = 0;
    for j in 0..k {
        let index = j * d / k;
        match acf(&store.marginal(index)?, max_lag) {
            Ok(values) => curves.push(AcfCurve {
                band: "x".into(),
                index,
                values,
            }),
            Err(nfula::Error::DegenerateSeries) => degenerate += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let env = |f: fn(&[f64]) -> f64| -> Vec<f64> {
        (0..=max_lag)
            .map(|l| {
                let mut col: Vec<f64> = curves.iter().map(|c| c.values[l]).collect();
                col.sort_by(f64::total_cmp);
                f(&col)
            })
            .collect()
    };
    let has = !curves.is_empty();
    Ok(BandAcf {
        band: "x".into(),
        min: if has { env(|c| c[0]) } else { vec![] },
        median: if has {
            env(|c| {
                if c.len() % 2 == 1 {
                    c[c.len() / 2]
                } else {
                    0.5 * (c[c.len() / 2 - 1] + c[c.len() / 2])
                }
            })
        } else {
            vec![]
        },
        max: if has { env(|c| c[c.len() - 1]) } else { vec![] },
        curves,
        degenerate,
    })
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<(), CliError> {
    let store = SampleStore::open(&a.chain)?;
    let n = store.len();
    if n < 2 {
        return Err(CliError::Usage(format!("chain has {n} samples; need at least 2")));
    }
    let max_lag = a.max_lag.min(n - 1);
    let mut report = DiagnosticsReport::new();
    report.push("samples", "", None, None, n as f64);
    let (mean, _) = posterior_summaries(&store)?;
    if let Some(r) = &a.reference {
        let reference = read_nft(r)?;
        let p = psnr(&mean, &reference, 1.0)?;
        report.add_psnr("posterior_mean", p);
        kv("psnr_mean", p);
    }
    let shape = store.sample_shape();
    let bands = if shape.len() == 2 && shape[0] % 2 == 0 && shape[1] % 2 == 0 {
        chain_acf_bands(&store, a.dims_per_band, max_lag, &mut Rng::new(a.seed, 0))?
    } else {
        vec![coordinate_acf(&store, a.dims_per_band, max_lag)?]
    };
    for b in &bands {
        report.add_band(b);
        if let Some(m) = b.median.get(1) {
            kv(&format!("acf_median_lag1.{}", b.band), *m);
        }
    }
    // Stationarity proxy: W1 between the two halves of the chain.
    let d = shape.iter().product::<usize>();
    let k = a.dims_per_band.clamp(1, d);
    let mut worst: f64 = 0.0;
    for j in 0..k {
        let dim = j * d / k;
        let m = store.marginal(dim)?;
        let half = m.len() / 2;
        let w = wasserstein1_1d(&m[..half], &m[half..])?;
        report.add_w1(dim, w);
        worst = worst.max(w);
    }
    kv("w1_halves_max", worst);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    report.save(&a.out)?;
    println!("samples = {n}");
    println!("rows = {}", report.rows.len());
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    /// Suites to run; all when omitted.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    pub suites: Vec<String>,
    /// Output CSV (`metric,band,dim,lag,value`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    let names: Vec<&str> = if a.suites.is_empty() {
        SUITES.to_vec()
    } else {
        a.suites.iter().map(String::as_str).collect()
    };
    let report = run_suites(&names, a.seed);
    for r in report.rows.iter().filter(|r| r.metric.starts_with("check.")) {
        println!("{} {} = {}", r.metric, r.band, g17(r.value));
    }
    if let Some(out) = &a.out {
        report.save(out)?;
    }
    if report.checks_passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .rows
            .iter()
            .filter(|r| r.band == "passed" && r.value != 1.0)
            .map(|r| r.metric.as_str())
            .collect();
        Err(CliError::Failed(format!("failed checks: {}", failed.join(", "))))
    }
}
