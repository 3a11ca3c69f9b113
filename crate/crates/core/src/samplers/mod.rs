//! Langevin kernels (ULA, NF-ULA, PnP-ULA, MYULA), box projection and the
//! chain driver.

mod store;

use std::fmt;
use std::path::PathBuf;

pub use store::{posterior_summaries, SampleStore, DEFAULT_MEMORY_BUDGET};

use crate::error::{Error, Result};
use crate::likelihood::Likelihood;
use crate::priors::{Denoiser, Prior};
use crate::tensor::{Rng, Tensor};

/// Box `[lo, hi]`, either one interval broadcast over all coordinates or
/// one interval per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxSet {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::per_coordinate(vec![lo], vec![hi])
    }

    pub fn per_coordinate(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::invalid("box bounds must be nonempty and of equal length"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || l.is_nan() || h.is_nan()) {
            return Err(Error::invalid("box requires lo < hi componentwise"));
        }
        Ok(BoxSet { lo, hi })
    }

    /// `[-100, 100]^d`.
    pub fn default_projection() -> Self {
        BoxSet::uniform(-100.0, 100.0).expect("valid box")
    }

    /// `[-0.2, 1.2]^d`, used to monitor escapes.
    pub fn default_monitor() -> Self {
        BoxSet::uniform(-0.2, 1.2).expect("valid box")
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        if self.lo.len() == 1 {
            (self.lo[0], self.hi[0])
        } else {
            (self.lo[i], self.hi[i])
        }
    }

    pub fn lo(&self, i: usize) -> f64 {
        self.bounds(i).0
    }

    pub fn hi(&self, i: usize) -> f64 {
        self.bounds(i).1
    }

    pub fn max_abs_bound(&self) -> f64 {
        self.lo.iter().chain(&self.hi).fold(0.0f64, |a, b| a.max(b.abs()))
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.lo.len() != 1 && self.lo.len() != n {
            return Err(Error::ShapeMismatch {
                expected: vec![self.lo.len()],
                got: vec![n],
            });
        }
        Ok(())
    }

    pub fn project_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(x.len())?;
        for (i, (o, &v)) in out.iter_mut().zip(x).enumerate() {
            let (l, h) = self.bounds(i);
            *o = v.clamp(l, h);
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &v)| {
            let (l, h) = self.bounds(i);
            v >= l && v <= h
        })
    }
}

/// Componentwise clamp of `x` onto the box.
pub fn project_box(b: &BoxSet, x: &Tensor) -> Result<Tensor> {
    let mut out = vec![0.0; x.len()];
    b.project_into(x.data(), &mut out)?;
    Tensor::from_raw(x.shape().to_vec(), out)
}

/// `(1/6) / (L_y + α L + 1/λ)`.
pub fn step_bound(l_y: f64, alpha: f64, l: f64, lambda: f64) -> Result<f64> {
    if !(l_y > 0.0 && alpha > 0.0 && l > 0.0 && lambda > 0.0) {
        return Err(Error::invalid("step_bound needs positive L_y, alpha, L and lambda"));
    }
    Ok((1.0 / 6.0) / (l_y + alpha * l + 1.0 / lambda))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Ula,
    NfUla,
    PnpUla,
    MyUla,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Ula => "ula",
            KernelKind::NfUla => "nfula",
            KernelKind::PnpUla => "pnpula",
            KernelKind::MyUla => "myula",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ula" => Some(KernelKind::Ula),
            "nfula" => Some(KernelKind::NfUla),
            "pnpula" => Some(KernelKind::PnpUla),
            "myula" => Some(KernelKind::MyUla),
            _ => None,
        }
    }

    fn projects(self) -> bool {
        matches!(self, KernelKind::NfUla | KernelKind::PnpUla)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub kind: KernelKind,
    pub delta: f64,
    pub alpha: f64,
    /// Weight of the projection drift `(δ/λ)(Π_C(x) − x)`.
    pub lambda: f64,
    pub projection: BoxSet,
    pub monitor: BoxSet,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub stream: u64,
    /// MYULA proximal parameter `λ'`; `None` means `λ' = δ`.
    pub prox_lambda: Option<f64>,
    /// Lipschitz constant of the prior score used by the step-size guard
    /// when the prior does not provide one.
    pub prior_lipschitz: Option<f64>,
    /// Scale of the injected noise; 1 for sampling, 0 for drift-only tests.
    pub noise_scale: f64,
    /// Abort once `‖X‖∞` exceeds this value.
    pub divergence_threshold: f64,
    /// Record a trace row every this many iterations (0 disables).
    pub trace_every: usize,
    /// Ground truth for the PSNR trace.
    pub reference: Option<Tensor>,
    pub memory_budget: usize,
    pub spill_dir: Option<PathBuf>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: KernelKind::NfUla,
            delta: 5e-5,
            alpha: 1.0,
            lambda: 5e-5,
            projection: BoxSet::default_projection(),
            monitor: BoxSet::default_monitor(),
            iterations: 1000,
            burn_in: 0,
            thinning: 1,
            seed: 0,
            stream: 0,
            prox_lambda: None,
            prior_lipschitz: None,
            noise_scale: 1.0,
            divergence_threshold: 1e6,
            trace_every: 0,
            reference: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            spill_dir: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.delta, "delta")?;
        pos(self.alpha, "alpha")?;
        pos(self.lambda, "lambda")?;
        if let Some(l) = self.prox_lambda {
            pos(l, "prox_lambda")?;
        }
        if self.thinning == 0 {
            return Err(Error::invalid("thinning must be at least 1"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::invalid(format!(
                "burn_in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::invalid("noise_scale must be nonnegative"));
        }
        Ok(())
    }

    pub fn prox_lambda(&self) -> f64 {
        self.prox_lambda.unwrap_or(self.delta)
    }
}

/// Prior information consumed by a kernel: a score/prox provider, or a
/// denoiser for PnP-ULA.
#[derive(Clone, Copy, Debug)]
pub enum PriorTerm<'a> {
    Prior(&'a Prior),
    Denoiser(&'a Denoiser),
}

impl<'a> From<&'a Prior> for PriorTerm<'a> {
    fn from(p: &'a Prior) -> Self {
        PriorTerm::Prior(p)
    }
}

impl<'a> From<&'a Denoiser> for PriorTerm<'a> {
    fn from(d: &'a Denoiser) -> Self {
        PriorTerm::Denoiser(d)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub psnr: Option<f64>,
    pub log_likelihood: f64,
    pub projection_active: bool,
}

/// Running mean and sum of squared deviations (Welford).
#[derive(Clone, Debug, PartialEq)]
pub struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(d: usize) -> Self {
        Welford {
            n: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Sample variance (`n - 1` denominator); zero below two samples.
    pub fn variance(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.mean.len()];
        }
        self.m2.iter().map(|s| s / (self.n as f64 - 1.0)).collect()
    }
}

/// Mutable state of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub shape: Vec<usize>,
    pub iteration: usize,
    pub rng: Rng,
    pub stats: Welford,
    pub trace: Vec<TraceRow>,
    /// Set once any sample leaves the monitor box.
    pub escaped: bool,
    /// Steps in which the projection drift was nonzero.
    pub projection_activations: u64,
    pub max_abs: f64,
    pub warnings: Vec<String>,
    lik_buf: Vec<f64>,
    prior_buf: Vec<f64>,
    noise_buf: Vec<f64>,
}

impl ChainState {
    pub fn new(x0: &Tensor, rng: Rng) -> Self {
        let d = x0.len();
        ChainState {
            x: x0.data().to_vec(),
            shape: x0.shape().to_vec(),
            iteration: 0,
            rng,
            stats: Welford::new(d),
            trace: Vec::new(),
            escaped: false,
            projection_activations: 0,
            max_abs: x0.max_abs(),
            warnings: Vec::new(),
            lik_buf: vec![0.0; d],
            prior_buf: vec![0.0; d],
            noise_buf: vec![0.0; d],
        }
    }

    pub fn current(&self) -> Tensor {
        Tensor::from_raw(self.shape.clone(), self.x.clone()).expect("state shape")
    }
}

fn prior_contribution(
    kind: KernelKind,
    x: &[f64],
    prior: PriorTerm<'_>,
    cfg: &SamplerConfig,
    out: &mut [f64],
) -> Result<f64> {
    match (kind, prior) {
        (KernelKind::Ula | KernelKind::NfUla, PriorTerm::Prior(p)) => {
            p.grad_into(x, out)?;
            Ok(cfg.delta * cfg.alpha)
        }
        (KernelKind::PnpUla, PriorTerm::Denoiser(d)) => {
            let r = d.residual(x)?;
            if r.len() != out.len() {
                return Err(Error::ShapeMismatch {
                    expected: vec![out.len()],
                    got: vec![r.len()],
                });
            }
            out.copy_from_slice(&r);
            Ok(cfg.delta * cfg.alpha / d.eps())
        }
        (KernelKind::MyUla, PriorTerm::Prior(p)) => {
            let lp = cfg.prox_lambda();
            p.prox_into(x, lp * cfg.alpha, out)?;
            for (o, &v) in out.iter_mut().zip(x) {
                *o -= v;
            }
            Ok(cfg.delta / lp)
        }
        (KernelKind::PnpUla, PriorTerm::Prior(_)) => Err(Error::invalid("PnP-ULA needs a denoiser")),
        (_, PriorTerm::Denoiser(_)) => Err(Error::invalid("only PnP-ULA takes a denoiser")),
    }
}

/// One Euler–Maruyama step. Every kernel forms the new state as
/// `x + (δ∇lik + c·prior_term [+ (δ/λ)(Π(x) − x)]) + √(2δ)·s·Z`, adding the
/// projection drift only where it is nonzero.
pub fn kernel_step(state: &mut ChainState, lik: &Likelihood, prior: PriorTerm<'_>, cfg: &SamplerConfig) -> Result<()> {
    let d = state.x.len();
    let kind = cfg.kind;
    let mut lik_buf = std::mem::take(&mut state.lik_buf);
    let mut prior_buf = std::mem::take(&mut state.prior_buf);
    let mut noise_buf = std::mem::take(&mut state.noise_buf);
    let result = (|| {
        lik.grad_into(&state.x, &mut lik_buf)?;
        let c = prior_contribution(kind, &state.x, prior, cfg, &mut prior_buf)?;
        state.rng.fill_gaussian(&mut noise_buf);
        let sq = (2.0 * cfg.delta).sqrt() * cfg.noise_scale;
        let proj_coef = cfg.delta / cfg.lambda;
        let mut active = false;
        let mut max_abs = 0.0f64;
        let mut escaped = false;
        for i in 0..d {
            let xi = state.x[i];
            let mut drift = cfg.delta * lik_buf[i] + c * prior_buf[i];
            if kind.projects() {
                let p = xi.clamp(cfg.projection.lo(i), cfg.projection.hi(i)) - xi;
                if p != 0.0 {
                    drift += proj_coef * p;
                    active = true;
                }
            }
            let v = xi + drift + sq * noise_buf[i];
            state.x[i] = v;
            max_abs = max_abs.max(v.abs());
            escaped |= v < cfg.monitor.lo(i) || v > cfg.monitor.hi(i);
        }
        state.iteration += 1;
        if !max_abs.is_finite() || state.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!(
                "chain state at iteration {}",
                state.iteration
            )));
        }
        if active {
            state.projection_activations += 1;
        }
        state.escaped |= escaped;
        state.max_abs = state.max_abs.max(max_abs);
        if max_abs > cfg.divergence_threshold {
            return Err(Error::Diverged {
                iteration: state.iteration,
                max_abs,
            });
        }
        Ok(())
    })();
    state.lik_buf = lik_buf;
    state.prior_buf = prior_buf;
    state.noise_buf = noise_buf;
    result
}

/// Unscaled drift `b(x)` with `x_{k+1} = x_k + δ b(x_k) + √(2δ) Z`:
/// `∇lik + α∇log q + (Π(x) − x)/λ` for NF-ULA and analogues for the other
/// kernels.
pub fn drift_field(x: &[f64], lik: &Likelihood, prior: PriorTerm<'_>, cfg: &SamplerConfig) -> Result<Vec<f64>> {
    let d = x.len();
    let mut g = vec![0.0; d];
    lik.grad_into(x, &mut g)?;
    let mut p = vec![0.0; d];
    let c = prior_contribution(cfg.kind, x, prior, cfg, &mut p)? / cfg.delta;
    Ok((0..d)
        .map(|i| {
            let mut b = g[i] + c * p[i];
            if cfg.kind.projects() {
                b += (x[i].clamp(cfg.projection.lo(i), cfg.projection.hi(i)) - x[i]) / cfg.lambda;
            }
            b
        })
        .collect())
}

/// Result of a chain that stopped early; carries everything produced up to
/// the failing iteration.
pub struct ChainAbort {
    pub error: Error,
    pub state: ChainState,
    pub store: SampleStore,
}

impl fmt::Debug for ChainAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainAbort")
            .field("error", &self.error)
            .field("iteration", &self.state.iteration)
            .field("retained", &self.store.len())
            .finish()
    }
}

impl fmt::Display for ChainAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "chain aborted after {} iterations ({} samples retained): {}",
            self.state.iteration,
            self.store.len(),
            self.error
        )
    }
}

impl std::error::Error for ChainAbort {}

impl From<Box<ChainAbort>> for Error {
    fn from(a: Box<ChainAbort>) -> Self {
        a.error
    }
}

/// Records step-size guard warnings for NF-ULA.
fn step_size_warnings(cfg: &SamplerConfig, lik: &Likelihood, prior: PriorTerm<'_>) -> Vec<String> {
    if cfg.kind != KernelKind::NfUla {
        return Vec::new();
    }
    let l_y = lik.lipschitz_constant().ok().flatten();
    let l = match prior {
        PriorTerm::Prior(p) => p.lipschitz_constant().ok().flatten().or(cfg.prior_lipschitz),
        PriorTerm::Denoiser(_) => cfg.prior_lipschitz,
    };
    match (l_y, l) {
        (Some(l_y), Some(l)) if l_y > 0.0 && l > 0.0 => match step_bound(l_y, cfg.alpha, l, cfg.lambda) {
            Ok(b) if cfg.delta >= b => vec![format!(
                "step size {:e} exceeds the stability bound {:e}; convergence is not guaranteed",
                cfg.delta, b
            )],
            _ => Vec::new(),
        },
        _ => vec!["step-size bound unavailable (missing Lipschitz constant); not checked".to_string()],
    }
}

fn psnr_unit(x: &[f64], reference: &[f64]) -> f64 {
    let mse = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        200.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(200.0)
    }
}

/// Runs `cfg.iterations` steps from `x0`, discarding `burn_in` and keeping
/// every `thinning`-th later sample.
pub fn run_chain(
    cfg: &SamplerConfig,
    lik: &Likelihood,
    prior: PriorTerm<'_>,
    x0: &Tensor,
) -> std::result::Result<(ChainState, SampleStore), Box<ChainAbort>> {
    let state = ChainState::new(x0, Rng::new(cfg.seed, cfg.stream));
    run_chain_from(cfg, lik, prior, state)
}

/// [`run_chain`] starting from an existing state (its iteration counter is
/// reset).
pub fn run_chain_from(
    cfg: &SamplerConfig,
    lik: &Likelihood,
    prior: PriorTerm<'_>,
    mut state: ChainState,
) -> std::result::Result<(ChainState, SampleStore), Box<ChainAbort>> {
    let mut store = SampleStore::with_budget(&state.shape, cfg.memory_budget, cfg.spill_dir.clone());
    let abort = |error, state, store| Box::new(ChainAbort { error, state, store });
    if let Err(e) = cfg.validate() {
        return Err(abort(e, state, store));
    }
    if state.x.len() != lik.dim() {
        let e = Error::ShapeMismatch {
            expected: lik.operator().input_shape().to_vec(),
            got: state.shape.clone(),
        };
        return Err(abort(e, state, store));
    }
    state.iteration = 0;
    state.warnings.extend(step_size_warnings(cfg, lik, prior));
    let mut last_activations = state.projection_activations;
    for k in 1..=cfg.iterations {
        if let Err(e) = kernel_step(&mut state, lik, prior, cfg) {
            let _ = store.spill_to_configured(cfg);
            return Err(abort(e, state, store));
        }
        if k > cfg.burn_in && (k - cfg.burn_in).is_multiple_of(cfg.thinning) {
            state.stats.push(&state.x);
            if let Err(e) = store.push(&state.x) {
                return Err(abort(e, state, store));
            }
        }
        if cfg.trace_every > 0 && k % cfg.trace_every == 0 {
            let ll = lik.log_likelihood_slice(&state.x).unwrap_or(f64::NAN);
            let psnr = cfg
                .reference
                .as_ref()
                .filter(|r| r.len() == state.x.len())
                .map(|r| psnr_unit(&state.x, r.data()));
            state.trace.push(TraceRow {
                iteration: k,
                psnr,
                log_likelihood: ll,
                projection_active: state.projection_activations > last_activations,
            });
            last_activations = state.projection_activations;
        }
    }
    Ok((state, store))
}

impl SampleStore {
    /// Flushes buffered samples when the run has a configured spill
    /// directory, so partial results of an aborted chain are on disk.
    fn spill_to_configured(&mut self, cfg: &SamplerConfig) -> Result<()> {
        if cfg.spill_dir.is_some() {
            self.spill()
        } else {
            Ok(())
        }
    }
}

/// First trace iteration after which the least-squares PSNR slope over a
/// trailing window of `window` rows stays below `threshold` (dB per
/// iteration). Advisory only.
pub fn psnr_plateau(trace: &[TraceRow], window: usize, threshold: f64) -> Option<usize> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter_map(|r| r.psnr.map(|p| (r.iteration as f64, p)))
        .collect();
    if window < 2 || pts.len() < window {
        return None;
    }
    for end in window..=pts.len() {
        let w = &pts[end - window..end];
        let n = w.len() as f64;
        let mx = w.iter().map(|p| p.0).sum::<f64>() / n;
        let my = w.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = w.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = w.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        if sxx > 0.0 && (sxy / sxx).abs() < threshold {
            return Some(w[window - 1].0 as usize);
        }
    }
    None
}
