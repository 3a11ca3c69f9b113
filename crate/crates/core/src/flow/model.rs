use rayon::prelude::*;

use super::layer::{CouplingMask, FlowLayer};
use super::mlp::Activation;
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const GRAD_CHUNK: usize = 16;

/// Stack of invertible layers with a standard normal base. Layers are
/// listed from the data side: `T⁻¹` applies them in order, `T` in reverse.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    dim: usize,
    layers: Vec<FlowLayer>,
}

/// Parameter-shaped gradient, ordered like [`FlowModel::param_layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct FlowGradient {
    layers: Vec<Vec<Vec<f64>>>,
}

impl FlowGradient {
    pub fn zeros_like(model: &FlowModel) -> Self {
        FlowGradient {
            layers: model
                .layers
                .iter()
                .map(|l| l.params().iter().map(|p| vec![0.0; p.len()]).collect())
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flatten().flatten().copied().collect()
    }

    /// Gradients as named tensors, using the checkpoint naming scheme.
    pub fn named(&self, model: &FlowModel) -> Vec<(String, Tensor)> {
        model
            .param_layout()
            .into_iter()
            .zip(self.layers.iter().flatten())
            .map(|((name, shape), g)| (name, Tensor::from_raw(shape, g.clone()).expect("layout matches")))
            .collect()
    }

    fn add_assign(&mut self, other: &FlowGradient) {
        for (a, b) in self.layers.iter_mut().flatten().zip(other.layers.iter().flatten()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn check_finite(v: &[f64], context: impl FnOnce() -> String) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::non_finite(context()))
    }
}

/// Default coupling subnet: two hidden layers of width `max(32, 2 * n_passive)`.
pub fn default_hidden(n_passive: usize) -> Vec<usize> {
    let w = (2 * n_passive).max(32);
    vec![w, w]
}

impl FlowModel {
    pub fn new(dim: usize, layers: Vec<FlowLayer>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("flow dimension must be positive"));
        }
        if let Some((i, l)) = layers.iter().enumerate().find(|(_, l)| l.dim() != dim) {
            return Err(Error::invalid(format!(
                "layer {i} ({}) acts on dimension {}, model has {dim}",
                l.kind_name(),
                l.dim()
            )));
        }
        Ok(FlowModel { dim, layers })
    }

    pub fn identity(dim: usize) -> Self {
        FlowModel {
            dim,
            layers: Vec::new(),
        }
    }

    /// ActNorm followed by `n_couplings` additive couplings with
    /// alternating split masks and default-width ReLU subnets.
    pub fn additive(dim: usize, n_couplings: usize, rng: &mut Rng) -> Result<Self> {
        Self::coupled(dim, n_couplings, None, Activation::Relu, false, rng)
    }

    /// Same architecture with sigmoid-scaled affine couplings.
    pub fn affine(dim: usize, n_couplings: usize, rng: &mut Rng) -> Result<Self> {
        Self::coupled(dim, n_couplings, None, Activation::Relu, true, rng)
    }

    /// General builder; `hidden = None` uses [`default_hidden`].
    pub fn coupled(
        dim: usize,
        n_couplings: usize,
        hidden: Option<&[usize]>,
        activation: Activation,
        affine: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if dim < 2 && n_couplings > 0 {
            return Err(Error::invalid("coupling layers need dim >= 2"));
        }
        let mut layers = vec![FlowLayer::actnorm(dim)];
        for k in 0..n_couplings {
            let mask = CouplingMask::split(dim, k)?;
            let h = hidden
                .map(|h| h.to_vec())
                .unwrap_or_else(|| default_hidden(mask.n_passive()));
            layers.push(if affine {
                FlowLayer::affine(mask, &h, activation, rng)
            } else {
                FlowLayer::additive(mask, &h, activation, rng)
            });
        }
        Self::new(dim, layers)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[FlowLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [FlowLayer] {
        &mut self.layers
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim {
            return Err(Error::ShapeMismatch {
                expected: vec![self.dim],
                got: vec![n],
            });
        }
        Ok(())
    }

    /// `x -> (T⁻¹(x), log|det J_{T⁻¹}(x)|)` on raw slices.
    pub fn inverse_slice(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_len(x.len())?;
        let mut h = x.to_vec();
        let mut logdet = 0.0;
        for (i, layer) in self.layers.iter().enumerate() {
            let (z, ld) = layer.inverse(&h);
            check_finite(&z, || format!("flow inverse at layer {i}"))?;
            logdet += ld;
            h = z;
        }
        if !logdet.is_finite() {
            return Err(Error::non_finite("flow log-determinant"));
        }
        Ok((h, logdet))
    }

    pub fn flow_inverse(&self, x: &Tensor) -> Result<(Tensor, f64)> {
        let (z, ld) = self.inverse_slice(x.data())?;
        Ok((Tensor::from_raw(x.shape().to_vec(), z)?, ld))
    }

    pub fn forward_slice(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len())?;
        let mut h = z.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            h = layer.forward(&h)?;
            check_finite(&h, || format!("flow forward at layer {i}"))?;
        }
        Ok(h)
    }

    pub fn flow_forward(&self, z: &Tensor) -> Result<Tensor> {
        Tensor::from_raw(z.shape().to_vec(), self.forward_slice(z.data())?)
    }

    /// Generates `x = T(z)` and evaluates `log q(x)` along the generative
    /// pass, independently of [`FlowModel::log_density`].
    pub fn generate_with_log_density(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_len(z.len())?;
        let mut logq = base_log_density(z);
        let mut h = z.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            logq += layer.logdet_from_output(&h);
            h = layer.forward(&h)?;
            check_finite(&h, || format!("flow forward at layer {i}"))?;
        }
        Ok((h, logq))
    }

    pub fn log_density_slice(&self, x: &[f64]) -> Result<f64> {
        let (z, ld) = self.inverse_slice(x)?;
        Ok(base_log_density(&z) + ld)
    }

    pub fn log_density(&self, x: &Tensor) -> Result<f64> {
        self.log_density_slice(x.data())
    }

    /// Evaluates `log q(x)` and back-propagates `weight * log q` into the
    /// input gradient (returned) and, optionally, parameter gradients.
    fn backprop(&self, x: &[f64], weight: f64, grads: Option<&mut FlowGradient>) -> Result<(f64, Vec<f64>)> {
        self.check_len(x.len())?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let mut logdet = 0.0;
        for (i, layer) in self.layers.iter().enumerate() {
            let (z, ld, cache) = layer.inverse_cached(&h);
            check_finite(&z, || format!("flow inverse at layer {i}"))?;
            logdet += ld;
            caches.push(cache);
            h = z;
        }
        let logq = base_log_density(&h) + logdet;
        if !logq.is_finite() {
            return Err(Error::non_finite("flow log-density"));
        }
        let mut g: Vec<f64> = h.iter().map(|z| -weight * z).collect();
        match grads {
            Some(gr) => {
                for (i, layer) in self.layers.iter().enumerate().rev() {
                    g = layer.backward(&caches[i], &g, weight, Some(&mut gr.layers[i]));
                }
            }
            None => {
                for (i, layer) in self.layers.iter().enumerate().rev() {
                    g = layer.backward(&caches[i], &g, weight, None);
                }
            }
        }
        check_finite(&g, || "flow score".to_string())?;
        Ok((logq, g))
    }

    /// `Jᵀu` for the Jacobian `J` of `x -> T⁻¹(x)` at `x`, using the
    /// activation pattern at `x`.
    pub fn jacobian_transpose_product(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        self.check_len(u.len())?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let (z, _, cache) = layer.inverse_cached(&h);
            caches.push(cache);
            h = z;
        }
        let mut g = u.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward(&caches[i], &g, 0.0, None);
        }
        check_finite(&g, || "flow Jacobian product".to_string())?;
        Ok(g)
    }

    /// Row-major `d x d` Jacobian of `x -> T⁻¹(x)`.
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut out = Vec::with_capacity(d * d);
        let mut e = vec![0.0; d];
        for i in 0..d {
            e[i] = 1.0;
            out.extend(self.jacobian_transpose_product(x, &e)?);
            e[i] = 0.0;
        }
        Ok(out)
    }

    /// `(log q(x), ∇ₓ log q(x))`.
    pub fn log_density_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.backprop(x, 1.0, None)
    }

    pub fn grad_log_density(&self, x: &Tensor) -> Result<Tensor> {
        let (_, g) = self.log_density_and_grad(x.data())?;
        Tensor::from_raw(x.shape().to_vec(), g)
    }

    /// Mean negative log-likelihood `-(1/N) Σ log q(xᵢ)` (including the
    /// `(d/2) log 2π` constant) and its exact parameter gradient.
    pub fn nll_loss_and_grad(&self, batch: &[Tensor]) -> Result<(f64, FlowGradient)> {
        let rows: Vec<&[f64]> = batch.iter().map(|t| t.data()).collect();
        self.nll_rows(&rows)
    }

    /// Slice form of [`FlowModel::nll_loss_and_grad`]. Chunks are reduced in
    /// a fixed order so the result does not depend on the thread count.
    pub fn nll_rows(&self, rows: &[&[f64]]) -> Result<(f64, FlowGradient)> {
        if rows.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let weight = -1.0 / rows.len() as f64;
        let partials: Vec<Result<(f64, FlowGradient)>> = rows
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grad = FlowGradient::zeros_like(self);
                let mut loss = 0.0;
                for x in chunk {
                    let (logq, _) = self.backprop(x, weight, Some(&mut grad))?;
                    loss += weight * logq;
                }
                Ok((loss, grad))
            })
            .collect();
        let mut total = 0.0;
        let mut grad = FlowGradient::zeros_like(self);
        for p in partials {
            let (l, g) = p?;
            total += l;
            grad.add_assign(&g);
        }
        Ok((total, grad))
    }

    /// Mean NLL without gradients.
    pub fn mean_nll(&self, rows: &[&[f64]]) -> Result<f64> {
        let vals: Vec<Result<f64>> = rows.par_iter().map(|x| self.log_density_slice(x)).collect();
        let mut s = 0.0;
        for v in vals {
            s -= v?;
        }
        Ok(s / rows.len() as f64)
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<Tensor>> {
        (0..n)
            .map(|_| {
                let mut z = vec![0.0; self.dim];
                rng.fill_gaussian(&mut z);
                Tensor::from_raw(vec![self.dim], self.forward_slice(&z)?)
            })
            .collect()
    }

    /// Sum of `log|s|` over all ActNorm scales.
    pub fn actnorm_log_scale_sum(&self) -> f64 {
        self.layers
            .iter()
            .filter(|l| matches!(l, FlowLayer::ActNorm { .. }))
            .filter_map(|l| l.constant_logdet())
            .sum()
    }

    /// Checkpoint-style names and shapes of all trainable parameters.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let kind = l.kind_name();
                l.param_layout()
                    .into_iter()
                    .map(move |(role, shape)| (format!("layer{i:03}.{kind}.{role}"), shape))
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().flat_map(|l| l.params()).map(|p| p.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .flat_map(|p| p.iter().copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                p.copy_from_slice(&flat[off..off + p.len()]);
                off += p.len();
            }
        }
        Ok(())
    }

    /// Adds `scale * N(0,1)` noise to every subnet parameter and, if
    /// `actnorm` is set, randomizes ActNorm scales around 1. Used to build
    /// generic test models away from the identity initialization.
    pub fn perturb(&mut self, scale: f64, actnorm: bool, rng: &mut Rng) {
        for layer in &mut self.layers {
            match layer {
                FlowLayer::ActNorm {
                    scale: s,
                    bias,
                    initialized,
                } => {
                    if actnorm {
                        for v in s.iter_mut() {
                            *v = (0.5 * rng.gaussian()).exp();
                        }
                        for v in bias.iter_mut() {
                            *v = 0.3 * rng.gaussian();
                        }
                        *initialized = true;
                    }
                }
                FlowLayer::AdditiveCoupling { subnet, .. } => subnet.perturb(scale, rng),
                FlowLayer::AffineCoupling {
                    scale_net, shift_net, ..
                } => {
                    scale_net.perturb(scale, rng);
                    shift_net.perturb(scale, rng);
                }
                FlowLayer::Permutation { .. } => {}
            }
        }
    }
}

/// Standard normal log-density on `R^d`.
pub fn base_log_density(z: &[f64]) -> f64 {
    -0.5 * z.iter().map(|v| v * v).sum::<f64>() - 0.5 * z.len() as f64 * LN_2PI
}
