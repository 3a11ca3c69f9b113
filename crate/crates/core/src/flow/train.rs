use super::checkpoint::Checkpoint;
use super::layer::FlowLayer;
use super::model::FlowModel;
use crate::error::{Error, Result};
use crate::tensor::Rng;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const MIN_STD: f64 = 1e-6;

/// Row-major collection of `n` samples of dimension `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "dataset of {} values is not a nonempty multiple of dim {dim}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite("training data"));
        }
        Ok(Dataset { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("dataset rows have different lengths"));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.len() as f64);
        m
    }

    /// Maximum-likelihood covariance (divides by `n`), row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let m = self.mean();
        let d = self.dim;
        let mut c = vec![0.0; d * d];
        for r in self.rows() {
            for i in 0..d {
                for j in 0..d {
                    c[i * d + j] += (r[i] - m[i]) * (r[j] - m[j]);
                }
            }
        }
        c.iter_mut().for_each(|v| *v /= self.len() as f64);
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 256,
            lr: 1e-3,
            jitter_sigma: 1.0 / 255.0,
            seed: 0,
        }
    }
}

/// Per-epoch mean training loss (mean negative log-likelihood in nats).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingTrace {
    pub epoch_loss: Vec<f64>,
}

impl TrainingTrace {
    /// True if the mean of the last `k` epochs is below the mean of the
    /// `k` epochs before them.
    pub fn trailing_mean_decreases(&self, k: usize) -> bool {
        let n = self.epoch_loss.len();
        if n < 2 * k || k == 0 {
            return false;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        mean(&self.epoch_loss[n - k..]) < mean(&self.epoch_loss[n - 2 * k..n - k])
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

/// Resumable maximum-likelihood trainer. Epoch `e` draws its shuffle and
/// jitter from stream `e` of the configured seed, so the trajectory only
/// depends on the epoch count and the optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    config: TrainConfig,
    adam: Adam,
    epochs_done: usize,
    steps_done: u64,
    trace: TrainingTrace,
}

impl Trainer {
    pub fn new(model: &FlowModel, config: TrainConfig) -> Result<Self> {
        if !(config.lr >= 0.0 && config.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and nonnegative"));
        }
        if config.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(Trainer {
            adam: Adam::new(model.num_params()),
            config,
            epochs_done: 0,
            steps_done: 0,
            trace: TrainingTrace::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn trace(&self) -> &TrainingTrace {
        &self.trace
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_done >= self.config.epochs
    }

    /// Runs up to `max_epochs` further epochs (bounded by the configured
    /// total). Returns the losses of the epochs run.
    pub fn run(&mut self, model: &mut FlowModel, data: &Dataset, max_epochs: usize) -> Result<Vec<f64>> {
        if data.dim() != model.dim() {
            return Err(Error::ShapeMismatch {
                expected: vec![model.dim()],
                got: vec![data.dim()],
            });
        }
        let mut out = Vec::new();
        while !self.is_finished() && out.len() < max_epochs {
            let loss = self.epoch(model, data)?;
            out.push(loss);
        }
        Ok(out)
    }

    fn epoch(&mut self, model: &mut FlowModel, data: &Dataset) -> Result<f64> {
        let mut rng = Rng::new(self.config.seed, self.epochs_done as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);
        let d = data.dim();
        let mut total = 0.0;
        for batch_idx in order.chunks(self.config.batch_size) {
            let mut buf = Vec::with_capacity(batch_idx.len() * d);
            for &i in batch_idx {
                for &v in data.row(i) {
                    buf.push(v + self.config.jitter_sigma * rng.gaussian());
                }
            }
            let rows: Vec<&[f64]> = buf.chunks_exact(d).collect();
            initialize_actnorm(model, &rows)?;
            let step = self.steps_done as usize;
            let (loss, grad) = model.nll_rows(&rows).map_err(|_| Error::TrainingDiverged { step })?;
            let g = grad.flat();
            if !loss.is_finite() || !g.iter().all(|v| v.is_finite()) {
                return Err(Error::TrainingDiverged { step });
            }
            let mut params = model.params_flat();
            self.adam.step(&mut params, &g, self.config.lr);
            if !params.iter().all(|v| v.is_finite()) {
                return Err(Error::TrainingDiverged { step });
            }
            model.set_params_flat(&params)?;
            self.steps_done += 1;
            total += loss * batch_idx.len() as f64;
        }
        let mean = total / data.len() as f64;
        self.trace.epoch_loss.push(mean);
        self.epochs_done += 1;
        Ok(mean)
    }

    /// Writes optimizer state and progress as `train.*` entries.
    pub fn save_state(&self, ck: &mut Checkpoint) {
        ck.remove_prefix("train.");
        ck.insert_scalar("train.epochs_total", self.config.epochs as f64);
        ck.insert_scalar("train.batch_size", self.config.batch_size as f64);
        ck.insert_scalar("train.lr", self.config.lr);
        ck.insert_scalar("train.jitter_sigma", self.config.jitter_sigma);
        ck.insert_u64("train.seed", self.config.seed);
        ck.insert_scalar("train.epochs_done", self.epochs_done as f64);
        ck.insert_u64("train.steps_done", self.steps_done);
        ck.insert_u64("train.adam.t", self.adam.t);
        if !self.adam.m.is_empty() {
            ck.insert_vec("train.adam.m", self.adam.m.clone());
            ck.insert_vec("train.adam.v", self.adam.v.clone());
        }
        if !self.trace.epoch_loss.is_empty() {
            ck.insert_vec("train.loss", self.trace.epoch_loss.clone());
        }
    }

    /// Restores a trainer saved by [`Trainer::save_state`]. The total epoch
    /// count may be raised to extend a finished run.
    pub fn load_state(model: &FlowModel, ck: &Checkpoint, epochs: Option<usize>) -> Result<Self> {
        let config = TrainConfig {
            epochs: epochs.unwrap_or(ck.scalar("train.epochs_total")? as usize),
            batch_size: ck.scalar("train.batch_size")? as usize,
            lr: ck.scalar("train.lr")?,
            jitter_sigma: ck.scalar("train.jitter_sigma")?,
            seed: ck.get_u64("train.seed")?,
        };
        let mut t = Trainer::new(model, config)?;
        t.epochs_done = ck.scalar("train.epochs_done")? as usize;
        t.steps_done = ck.get_u64("train.steps_done")?;
        t.adam.t = ck.get_u64("train.adam.t")?;
        let n = model.num_params();
        if n > 0 {
            let m = ck.require("train.adam.m")?.data().to_vec();
            let v = ck.require("train.adam.v")?.data().to_vec();
            if m.len() != n || v.len() != n {
                return Err(Error::invalid("optimizer state does not match the model"));
            }
            t.adam.m = m;
            t.adam.v = v;
        }
        if let Some(l) = ck.get("train.loss") {
            t.trace.epoch_loss = l.data().to_vec();
        }
        Ok(t)
    }
}

/// Sets every uninitialized ActNorm to whiten `rows` as they arrive at it.
fn initialize_actnorm(model: &mut FlowModel, rows: &[&[f64]]) -> Result<()> {
    let pending = model
        .layers()
        .iter()
        .any(|l| matches!(l, FlowLayer::ActNorm { initialized: false, .. }));
    if !pending {
        return Ok(());
    }
    let mut h: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    let n = h.len() as f64;
    for layer in model.layers_mut() {
        if let FlowLayer::ActNorm {
            scale,
            bias,
            initialized,
        } = layer
        {
            if !*initialized {
                for j in 0..scale.len() {
                    let mean = h.iter().map(|r| r[j]).sum::<f64>() / n;
                    let var = h.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt().max(MIN_STD);
                    scale[j] = 1.0 / std;
                    bias[j] = -mean / std;
                }
                *initialized = true;
            }
        }
        for r in h.iter_mut() {
            *r = layer.inverse(r).0;
        }
    }
    Ok(())
}

/// Trains `model` for `epochs` epochs with a fresh trainer seeded from `rng`.
pub fn train_flow(
    model: &mut FlowModel,
    data: &Dataset,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    jitter_sigma: f64,
    rng: &mut Rng,
) -> Result<TrainingTrace> {
    let config = TrainConfig {
        epochs,
        batch_size,
        lr,
        jitter_sigma,
        seed: rng.next_u64(),
    };
    let mut trainer = Trainer::new(model, config)?;
    trainer.run(model, data, usize::MAX)?;
    Ok(trainer.trace)
}
