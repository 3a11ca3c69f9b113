//! Small imaging problems on a disk phantom: deblurring, inpainting and
//! limited-angle CT, with patch flow priors trained on random ellipses.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::diagnostics::psnr;
use crate::error::Result;
use crate::flow::{Dataset, FlowModel, TrainConfig, Trainer, TrainingTrace};
use crate::likelihood::{simulate_observation, Likelihood, NoiseModel};
use crate::operators::phantoms::{disk_phantom, random_ellipses};
use crate::operators::{fbp_reconstruct, make_blur, make_mask, make_radon, motion_blur_kernel};
use crate::priors::{PatchGrid, PatchPrior, Prior};
use crate::samplers::{posterior_summaries, run_chain, PriorTerm, SamplerConfig};
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Debug)]
pub struct DeskProblem {
    pub name: &'static str,
    pub x_true: Tensor,
    pub likelihood: Likelihood,
    /// Reference reconstruction the sampler is compared with: the blurred
    /// observation, the zero-filled masked image, or FBP.
    pub baseline: Tensor,
    pub x0: Tensor,
}

impl DeskProblem {
    /// 9-tap horizontal motion blur, Gaussian noise `sigma`.
    pub fn deblur(side: usize, sigma: f64, seed: u64) -> Result<Self> {
        let x_true = disk_phantom(side);
        let op = Arc::new(make_blur(&[side, side], &motion_blur_kernel(9))?);
        let noise = NoiseModel::Gaussian { sigma };
        let y = simulate_observation(noise, &op, &x_true, &mut Rng::new(seed, 1))?;
        Ok(DeskProblem {
            name: "deblur",
            x_true,
            baseline: y.clone(),
            x0: y.clone(),
            likelihood: Likelihood::new(noise, op, y)?,
        })
    }

    /// Random pixel mask keeping `keep` of the pixels; the masked-out
    /// pixels of the observation are zero.
    pub fn inpaint(side: usize, keep: f64, sigma: f64, seed: u64) -> Result<Self> {
        let x_true = disk_phantom(side);
        let op = Arc::new(make_mask(&[side, side], keep, &mut Rng::new(seed, 2))?);
        let noise = NoiseModel::Gaussian { sigma };
        let y = simulate_observation(noise, &op, &x_true, &mut Rng::new(seed, 1))?;
        Ok(DeskProblem {
            name: "inpaint",
            x_true,
            baseline: y.clone(),
            x0: y.clone(),
            likelihood: Likelihood::new(noise, op, y)?,
        })
    }

    /// Parallel-beam CT over `[0.1π, 0.9π]` with Gaussian noise of standard
    /// deviation `noise_frac` times the clean sinogram maximum. Chains start
    /// from FBP.
    pub fn limited_angle_ct(side: usize, n_angles: usize, noise_frac: f64, seed: u64) -> Result<Self> {
        let x_true = disk_phantom(side);
        let op = Arc::new(make_radon(side, n_angles, 0.1 * PI, 0.9 * PI, None)?);
        let clean = op.apply(&x_true)?;
        let sigma = noise_frac * clean.max_abs();
        let noise = NoiseModel::Gaussian { sigma };
        let y = simulate_observation(noise, &op, &x_true, &mut Rng::new(seed, 1))?;
        let fbp = fbp_reconstruct(&op, &y)?;
        Ok(DeskProblem {
            name: "ct",
            x_true,
            baseline: fbp.clone(),
            x0: fbp,
            likelihood: Likelihood::new(noise, op, y)?,
        })
    }

    pub fn side(&self) -> usize {
        self.x_true.shape()[0]
    }

    pub fn baseline_psnr(&self) -> Result<f64> {
        psnr(&self.baseline, &self.x_true, 1.0)
    }
}

/// Training setup for a patch flow.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchFlowSpec {
    pub side: usize,
    pub n_images: usize,
    pub patch: usize,
    pub n_couplings: usize,
    pub train: TrainConfig,
}

impl Default for PatchFlowSpec {
    fn default() -> Self {
        PatchFlowSpec {
            side: 32,
            n_images: 6,
            patch: 4,
            n_couplings: 4,
            train: TrainConfig {
                epochs: 40,
                batch_size: 256,
                lr: 2e-3,
                jitter_sigma: 0.02,
                seed: 0,
            },
        }
    }
}

/// All stride-1 patches of `n_images` random-ellipse phantoms.
pub fn patch_dataset(spec: &PatchFlowSpec) -> Result<Dataset> {
    let mut rng = Rng::new(spec.train.seed, 3);
    let images: Vec<Tensor> = (0..spec.n_images)
        .map(|_| random_ellipses(spec.side, &mut rng))
        .collect();
    let grid = PatchGrid::new(spec.side, spec.side, spec.patch, 1)?;
    let refs: Vec<&[f64]> = images.iter().map(|t| t.data()).collect();
    Dataset::new(grid.patch_len(), grid.extract_all(&refs))
}

/// Additive-coupling flow trained on [`patch_dataset`].
pub fn train_patch_flow(spec: &PatchFlowSpec) -> Result<(FlowModel, TrainingTrace)> {
    let data = patch_dataset(spec)?;
    let mut model = FlowModel::additive(data.dim(), spec.n_couplings, &mut Rng::new(spec.train.seed, 4))?;
    let mut trainer = Trainer::new(&model, spec.train.clone())?;
    trainer.run(&mut model, &data, usize::MAX)?;
    Ok((model, trainer.trace().clone()))
}

/// Patch prior over a `side x side` image with the given stride.
pub fn patch_prior(model: Arc<FlowModel>, side: usize, patch: usize, stride: usize) -> Result<Prior> {
    Ok(Prior::Patch(PatchPrior::new(model, side, side, patch, stride)?))
}

/// Runs the sampler from the problem's initial point and returns the
/// posterior mean with its PSNR against the ground truth.
pub fn posterior_mean(problem: &DeskProblem, prior: &Prior, cfg: &SamplerConfig) -> Result<(Tensor, f64)> {
    let (_, store) = run_chain(cfg, &problem.likelihood, PriorTerm::Prior(prior), &problem.x0)?;
    let (mean, _) = posterior_summaries(&store)?;
    let p = psnr(&mean, &problem.x_true, 1.0)?;
    Ok((mean, p))
}
