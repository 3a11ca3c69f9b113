//! Python bindings. Arrays cross the boundary as flat lists of `float`
//! plus an explicit shape where one is needed.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nfula::diagnostics::{acf as acf_core, psnr as psnr_core, wasserstein1_1d};
use nfula::flow::{
    certify_lipschitz, empirical_hessian_bound, hessian_spectral_norm, load_flow, save_flow, train_flow, Activation,
    Dataset, FlowModel,
};
use nfula::likelihood::{simulate_observation, Likelihood, NoiseModel};
use nfula::operators::phantoms::{checkerboard, disk_phantom, shepp_logan};
use nfula::operators::{make_blur, make_identity, make_mask, make_radon, motion_blur_kernel, ForwardOperator};
use nfula::priors::{GaussianPrior, PatchPrior, Prior};
use nfula::samplers::{
    posterior_summaries, run_chain, step_bound as step_bound_core, BoxSet, KernelKind, PriorTerm, SamplerConfig,
};
use nfula::tensor::{read_nft as read_nft_core, write_nft as write_nft_core};
use nfula::{Rng, Tensor};

fn err(e: nfula::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn shaped(shape: &[usize], data: Vec<f64>) -> PyResult<Tensor> {
    Tensor::new(shape.to_vec(), data).map_err(err)
}

#[pyclass(name = "Flow", module = "nfula")]
#[derive(Clone)]
struct PyFlow {
    inner: Arc<FlowModel>,
}

#[pymethods]
impl PyFlow {
    /// ActNorm followed by `n_couplings` ReLU couplings, additive unless
    /// `affine` is set.
    #[staticmethod]
    #[pyo3(signature = (dim, n_couplings, seed = 0, affine = false))]
    fn coupled(dim: usize, n_couplings: usize, seed: u64, affine: bool) -> PyResult<Self> {
        let mut rng = Rng::new(seed, 0);
        let m = FlowModel::coupled(dim, n_couplings, None, Activation::Relu, affine, &mut rng).map_err(err)?;
        Ok(PyFlow { inner: Arc::new(m) })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyFlow {
            inner: Arc::new(load_flow(path).map_err(err)?),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_flow(&self.inner, path).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density_slice(&x).map_err(err)
    }

    fn grad_log_density(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.log_density_and_grad(&x).map_err(err)?.1)
    }

    /// `x -> (z, log|det J|)`.
    fn inverse(&self, x: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
        self.inner.inverse_slice(&x).map_err(err)
    }

    fn forward(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward_slice(&z).map_err(err)
    }

    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let xs = self.inner.sample(n, &mut Rng::new(seed, 0)).map_err(err)?;
        Ok(xs.into_iter().map(Tensor::into_data).collect())
    }

    /// Trains in place on `rows` and returns the per-epoch mean loss.
    #[pyo3(signature = (rows, epochs, batch_size = 256, lr = 1e-3, jitter = 0.0, seed = 0))]
    fn train(
        &mut self,
        rows: Vec<Vec<f64>>,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        jitter: f64,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let data = Dataset::from_rows(&rows).map_err(err)?;
        let model = Arc::make_mut(&mut self.inner);
        let trace = train_flow(model, &data, epochs, batch_size, lr, jitter, &mut Rng::new(seed, 0)).map_err(err)?;
        Ok(trace.epoch_loss)
    }

    /// `(certified, [(layer, kind, ok, reason), ...])`.
    fn certify(&self) -> (bool, Vec<(usize, String, bool, String)>) {
        let r = certify_lipschitz(&self.inner);
        let reasons = r
            .reasons
            .into_iter()
            .map(|v| (v.index, v.kind.to_string(), v.ok, v.reason))
            .collect();
        (r.certified, reasons)
    }

    #[pyo3(signature = (x, fd_step = 1e-5))]
    fn hessian_norm(&self, x: Vec<f64>, fd_step: f64) -> PyResult<f64> {
        hessian_spectral_norm(&self.inner, &x, fd_step).map_err(err)
    }

    #[pyo3(signature = (probes, fd_step = 1e-5))]
    fn empirical_hessian_bound(&self, probes: Vec<Vec<f64>>, fd_step: f64) -> PyResult<f64> {
        let probes: Vec<Tensor> = probes
            .into_iter()
            .map(Tensor::vector)
            .collect::<nfula::Result<_>>()
            .map_err(err)?;
        empirical_hessian_bound(&self.inner, &probes, fd_step).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Flow(dim={}, layers={})", self.inner.dim(), self.inner.layers().len())
    }
}

#[pyclass(name = "Operator", module = "nfula")]
#[derive(Clone)]
struct PyOperator {
    inner: Arc<ForwardOperator>,
}

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn identity(shape: Vec<usize>) -> Self {
        PyOperator {
            inner: Arc::new(make_identity(&shape)),
        }
    }

    /// Horizontal motion blur of odd length `size`.
    #[staticmethod]
    fn blur(shape: Vec<usize>, size: usize) -> PyResult<Self> {
        Ok(PyOperator {
            inner: Arc::new(make_blur(&shape, &motion_blur_kernel(size)).map_err(err)?),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (shape, keep, seed = 0))]
    fn mask(shape: Vec<usize>, keep: f64, seed: u64) -> PyResult<Self> {
        Ok(PyOperator {
            inner: Arc::new(make_mask(&shape, keep, &mut Rng::new(seed, 0)).map_err(err)?),
        })
    }

    /// Parallel-beam Radon transform; angles in degrees.
    #[staticmethod]
    #[pyo3(signature = (side, n_angles, angle_lo = 0.0, angle_hi = 180.0))]
    fn radon(side: usize, n_angles: usize, angle_lo: f64, angle_hi: f64) -> PyResult<Self> {
        Ok(PyOperator {
            inner: Arc::new(make_radon(side, n_angles, angle_lo, angle_hi, None).map_err(err)?),
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    #[getter]
    fn input_shape(&self) -> Vec<usize> {
        self.inner.input_shape().to_vec()
    }

    #[getter]
    fn output_shape(&self) -> Vec<usize> {
        self.inner.output_shape().to_vec()
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let t = shaped(self.inner.input_shape(), x)?;
        Ok(self.inner.apply(&t).map_err(err)?.into_data())
    }

    fn adjoint(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        let t = shaped(self.inner.output_shape(), y)?;
        Ok(self.inner.adjoint(&t).map_err(err)?.into_data())
    }

    fn norm(&self) -> PyResult<f64> {
        self.inner.operator_norm().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Operator({}, {:?} -> {:?})",
            self.inner.kind_name(),
            self.inner.input_shape(),
            self.inner.output_shape()
        )
    }
}

#[pyclass(name = "Prior", module = "nfula")]
#[derive(Clone)]
struct PyPrior {
    inner: Prior,
}

#[pymethods]
impl PyPrior {
    #[staticmethod]
    fn flow(flow: &PyFlow) -> Self {
        PyPrior {
            inner: Prior::Flow(flow.inner.clone()),
        }
    }

    /// Sum of flow log-densities over `patch x patch` patches of a
    /// `height x width` image.
    #[staticmethod]
    #[pyo3(signature = (flow, height, width, patch, stride = 1))]
    fn patch(flow: &PyFlow, height: usize, width: usize, patch: usize, stride: usize) -> PyResult<Self> {
        let p = PatchPrior::new(flow.inner.clone(), height, width, patch, stride).map_err(err)?;
        Ok(PyPrior { inner: Prior::Patch(p) })
    }

    /// `cov` is the row-major `d x d` covariance.
    #[staticmethod]
    fn gaussian(mean: Vec<f64>, cov: Vec<f64>) -> PyResult<Self> {
        Ok(PyPrior {
            inner: Prior::GaussianAnalytic(GaussianPrior::new(mean, cov).map_err(err)?),
        })
    }

    #[staticmethod]
    fn l1(weight: f64) -> PyResult<Self> {
        Ok(PyPrior {
            inner: Prior::l1(weight).map_err(err)?,
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    fn grad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.inner.grad_into(&x, &mut out).map_err(err)?;
        Ok(out)
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density_slice(&x).map_err(err)
    }

    fn prox(&self, x: Vec<f64>, lam: f64) -> PyResult<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.inner.prox_into(&x, lam, &mut out).map_err(err)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("Prior({:?})", self.inner)
    }
}

#[pyclass(name = "Likelihood", module = "nfula")]
#[derive(Clone)]
struct PyLikelihood {
    inner: Likelihood,
}

#[pymethods]
impl PyLikelihood {
    /// Gaussian likelihood `N(y; Ax, sigma^2 I)`.
    #[new]
    fn new(op: &PyOperator, y: Vec<f64>, sigma: f64) -> PyResult<Self> {
        let y = shaped(op.inner.output_shape(), y)?;
        Ok(PyLikelihood {
            inner: Likelihood::new(NoiseModel::Gaussian { sigma }, op.inner.clone(), y).map_err(err)?,
        })
    }

    /// Transmission counts with mean `n0 exp(-mu Ax)`, given as
    /// log-transformed data.
    #[staticmethod]
    fn poisson(op: &PyOperator, y: Vec<f64>, n0: f64, mu: f64) -> PyResult<Self> {
        let y = shaped(op.inner.output_shape(), y)?;
        Ok(PyLikelihood {
            inner: Likelihood::new(NoiseModel::Poisson { n0, mu }, op.inner.clone(), y).map_err(err)?,
        })
    }

    fn log_likelihood(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_likelihood_slice(&x).map_err(err)
    }

    fn grad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad_log_likelihood_slice(&x).map_err(err)
    }

    /// `‖A‖²/σ²`, or `None` for the Poisson model.
    fn lipschitz(&self) -> PyResult<Option<f64>> {
        self.inner.lipschitz_constant().map_err(err)
    }
}

/// `y = Ax + sigma * noise` for a flat `x` of the operator's input shape.
#[pyfunction]
#[pyo3(signature = (op, x, sigma, seed = 0))]
fn simulate(op: &PyOperator, x: Vec<f64>, sigma: f64, seed: u64) -> PyResult<Vec<f64>> {
    let x = shaped(op.inner.input_shape(), x)?;
    let y = simulate_observation(NoiseModel::Gaussian { sigma }, &op.inner, &x, &mut Rng::new(seed, 0)).map_err(err)?;
    Ok(y.into_data())
}

/// Runs one chain and returns posterior summaries. `kind` is one of
/// `nfula`, `ula` or `myula`; `lam` defaults to `delta`.
#[pyfunction]
#[pyo3(signature = (
    likelihood, prior, x0, kind = "nfula", delta = 5e-5, alpha = 1.0, lam = None,
    box_lo = -100.0, box_hi = 100.0, iterations = 1000, burn_in = 0, thinning = 1, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn sample<'py>(
    py: Python<'py>,
    likelihood: &PyLikelihood,
    prior: &PyPrior,
    x0: Vec<f64>,
    kind: &str,
    delta: f64,
    alpha: f64,
    lam: Option<f64>,
    box_lo: f64,
    box_hi: f64,
    iterations: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = KernelKind::parse(kind).ok_or_else(|| PyValueError::new_err(format!("unknown kernel {kind:?}")))?;
    if kind == KernelKind::PnpUla {
        return Err(PyValueError::new_err("PnP-ULA needs a denoiser and is not exposed"));
    }
    let cfg = SamplerConfig {
        kind,
        delta,
        alpha,
        lambda: lam.unwrap_or(delta),
        projection: BoxSet::uniform(box_lo, box_hi).map_err(err)?,
        iterations,
        burn_in,
        thinning,
        seed,
        ..Default::default()
    };
    let x0 = shaped(likelihood.inner.operator().input_shape(), x0)?;
    let lik = likelihood.inner.clone();
    let pr = prior.inner.clone();
    let res = py.allow_threads(move || {
        let (state, store) = run_chain(&cfg, &lik, PriorTerm::Prior(&pr), &x0).map_err(|a| a.error.to_string())?;
        let (mean, std) = posterior_summaries(&store).map_err(|e| e.to_string())?;
        Ok::<_, String>((state, store.len(), mean, std))
    });
    let (state, n, mean, std) = res.map_err(PyRuntimeError::new_err)?;
    let d = PyDict::new(py);
    d.set_item("mean", mean.into_data())?;
    d.set_item("std", std.into_data())?;
    d.set_item("n_samples", n)?;
    d.set_item("projection_activations", state.projection_activations)?;
    d.set_item("escaped", state.escaped)?;
    d.set_item("max_abs", state.max_abs)?;
    d.set_item("warnings", state.warnings)?;
    Ok(d)
}

#[pyfunction]
fn step_bound(l_y: f64, alpha: f64, l: f64, lam: f64) -> PyResult<f64> {
    step_bound_core(l_y, alpha, l, lam).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, reference, max_val = 1.0))]
fn psnr(x: Vec<f64>, reference: Vec<f64>, max_val: f64) -> PyResult<f64> {
    psnr_core(
        &Tensor::vector(x).map_err(err)?,
        &Tensor::vector(reference).map_err(err)?,
        max_val,
    )
    .map_err(err)
}

#[pyfunction]
fn acf(series: Vec<f64>, max_lag: usize) -> PyResult<Vec<f64>> {
    acf_core(&series, max_lag).map_err(err)
}

#[pyfunction]
fn wasserstein1(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    wasserstein1_1d(&a, &b).map_err(err)
}

/// `disk`, `shepp-logan` or `checkerboard`, flattened row-major.
#[pyfunction]
fn phantom(name: &str, side: usize) -> PyResult<Vec<f64>> {
    let t = match name {
        "disk" => disk_phantom(side),
        "shepp-logan" => shepp_logan(side),
        "checkerboard" => checkerboard(side, (side / 4).max(1)),
        _ => return Err(PyValueError::new_err(format!("unknown phantom {name:?}"))),
    };
    Ok(t.into_data())
}

/// `(shape, data)` from an NFT1 file.
#[pyfunction]
fn read_nft(path: PathBuf) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let t = read_nft_core(path).map_err(err)?;
    Ok((t.shape().to_vec(), t.into_data()))
}

#[pyfunction]
fn write_nft(path: PathBuf, shape: Vec<usize>, data: Vec<f64>) -> PyResult<()> {
    write_nft_core(path, &shaped(&shape, data)?).map_err(err)
}

#[pymodule]
#[pyo3(name = "nfula")]
fn nfula_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFlow>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyPrior>()?;
    m.add_class::<PyLikelihood>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(step_bound, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(acf, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein1, m)?)?;
    m.add_function(wrap_pyfunction!(phantom, m)?)?;
    m.add_function(wrap_pyfunction!(read_nft, m)?)?;
    m.add_function(wrap_pyfunction!(write_nft, m)?)?;
    Ok(())
}
