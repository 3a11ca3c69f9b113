//! Ground truths, forward operators, observations and training data built
//! from an [`ExperimentConfig`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nfula::flow::Dataset;
use nfula::image_io::read_pgm;
use nfula::likelihood::{Likelihood, NoiseModel};
use nfula::operators::phantoms::{checkerboard, disk_phantom, random_ellipses, shepp_logan};
use nfula::operators::{
    fbp_reconstruct, make_blur, make_identity, make_mask, make_mask_from, make_radon, motion_blur_kernel,
    ForwardOperator,
};
use nfula::priors::PatchGrid;
use nfula::tensor::read_nft;
use nfula::{Rng, Tensor};

use crate::config::{ExperimentConfig, Noise, Problem};
use crate::CliError;

/// RNG streams per randomized step, all seeded from `seed`.
pub const STREAM_NOISE: u64 = 1;
pub const STREAM_MASK: u64 = 2;
pub const STREAM_IMAGES: u64 = 3;
pub const STREAM_INIT: u64 = 4;
pub const STREAM_TOY: u64 = 5;
pub const STREAM_TRUTH: u64 = 6;

pub fn noise_model(cfg: &ExperimentConfig) -> NoiseModel {
    match cfg.noise {
        Noise::Gaussian => NoiseModel::Gaussian { sigma: cfg.sigma },
        Noise::Poisson => NoiseModel::Poisson { n0: cfg.n0, mu: cfg.mu },
    }
}

/// Reads an NFT1 or PGM image, chosen by extension.
pub fn read_image(path: &Path) -> Result<Tensor, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => Ok(read_pgm(path)?),
        Some("nft") => Ok(read_nft(path)?),
        _ => Err(CliError::Usage(format!(
            "{}: expected a .nft or .pgm image",
            path.display()
        ))),
    }
}

/// Named toy distributions on `R^2`.
pub fn toy_samples(name: &str, n: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>, CliError> {
    match name {
        // N((1, -0.5), [[1, 0.6], [0.6, 0.8]]) via its Cholesky factor.
        "gaussian" => {
            let l10 = 0.6;
            let l11 = (0.8f64 - 0.36).sqrt();
            Ok((0..n)
                .map(|_| {
                    let (a, b) = (rng.gaussian(), rng.gaussian());
                    vec![1.0 + a, -0.5 + l10 * a + l11 * b]
                })
                .collect())
        }
        // Equal mixture of N((±1.5, 0), 0.25 I).
        "mixture" => Ok((0..n)
            .map(|_| {
                let c = if rng.uniform() < 0.5 { -1.5 } else { 1.5 };
                vec![c + 0.5 * rng.gaussian(), 0.5 * rng.gaussian()]
            })
            .collect()),
        _ => Err(CliError::Usage(format!(
            "unknown toy distribution {name:?} (expected gaussian or mixture)"
        ))),
    }
}

pub fn ground_truth(cfg: &ExperimentConfig) -> Result<Tensor, CliError> {
    if !cfg.ground_truth.is_empty() {
        let t = read_image(Path::new(&cfg.ground_truth))?;
        return match (cfg.problem, t.shape()) {
            (Problem::Toy2d, [2]) => Ok(t),
            (Problem::Toy2d, s) => Err(CliError::Usage(format!(
                "toy2d ground truth must have shape [2], got {s:?}"
            ))),
            (Problem::Ct, [h, w]) if h != w => {
                Err(CliError::Usage(format!("CT ground truth must be square, got {h}x{w}")))
            }
            (_, [_, _]) => Ok(t),
            (_, s) => Err(CliError::Usage(format!(
                "ground truth must be a 2D image, got shape {s:?}"
            ))),
        };
    }
    if cfg.problem == Problem::Toy2d {
        let x = toy_samples(&cfg.train_data, 1, &mut Rng::new(cfg.seed, STREAM_TRUTH))?.remove(0);
        return Ok(Tensor::vector(x)?);
    }
    let s = cfg.side;
    match cfg.phantom.as_str() {
        "disk" => Ok(disk_phantom(s)),
        "shepp-logan" => Ok(shepp_logan(s)),
        "checkerboard" => Ok(checkerboard(s, (s / 4).max(1))),
        p => Err(CliError::Usage(format!(
            "unknown phantom {p:?} (expected disk, shepp-logan or checkerboard)"
        ))),
    }
}

/// Forward operator for images of `shape`. Inpainting draws its mask from
/// the seed unless `mask` is given.
pub fn operator(cfg: &ExperimentConfig, shape: &[usize], mask: Option<Vec<f64>>) -> Result<ForwardOperator, CliError> {
    Ok(match cfg.problem {
        Problem::Toy2d => make_identity(shape),
        Problem::Deblur => make_blur(shape, &motion_blur_kernel(cfg.blur_size))?,
        Problem::Inpaint => match mask {
            Some(m) => make_mask_from(shape, m)?,
            None => make_mask(shape, cfg.keep, &mut Rng::new(cfg.seed, STREAM_MASK))?,
        },
        Problem::Ct => make_radon(shape[0], cfg.n_angles, cfg.angle_lo, cfg.angle_hi, None)?,
    })
}

/// Chain start: FBP for CT, the observation otherwise.
pub fn initial_point(cfg: &ExperimentConfig, op: &ForwardOperator, y: &Tensor) -> Result<Tensor, CliError> {
    match cfg.problem {
        Problem::Ct => Ok(fbp_reconstruct(op, y)?),
        _ => Ok(y.clone()),
    }
}

/// Observation, likelihood, start point and (if present) ground truth
/// loaded from a `degrade` output directory.
pub struct LoadedProblem {
    pub likelihood: Likelihood,
    pub x0: Tensor,
    pub x_true: Option<Tensor>,
}

pub fn load_problem(cfg: &ExperimentConfig) -> Result<LoadedProblem, CliError> {
    let dir = &cfg.data;
    let y = read_nft(dir.join("y.nft"))?;
    let x_true_path = dir.join("x_true.nft");
    let x_true = if x_true_path.exists() {
        Some(read_nft(&x_true_path)?)
    } else {
        None
    };
    let shape: Vec<usize> = match (&x_true, cfg.problem) {
        (Some(x), _) => x.shape().to_vec(),
        (None, Problem::Ct) => vec![cfg.side, cfg.side],
        (None, _) => y.shape().to_vec(),
    };
    let mask_path = dir.join("mask.nft");
    let mask = if cfg.problem == Problem::Inpaint && mask_path.exists() {
        Some(read_nft(&mask_path)?.into_data())
    } else {
        None
    };
    let op = Arc::new(operator(cfg, &shape, mask)?);
    let x0 = initial_point(cfg, &op, &y)?;
    let likelihood = Likelihood::new(noise_model(cfg), op, y)?;
    Ok(LoadedProblem { likelihood, x0, x_true })
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("nft" | "pgm")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("{}: no .nft or .pgm images", dir.display())));
    }
    Ok(files)
}

/// Training set: toy points for `toy2d`; otherwise images (generated
/// ellipses or a directory), cut into stride-1 patches when `prior.patch`
/// is positive and flattened whole otherwise.
pub fn training_data(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    if cfg.problem == Problem::Toy2d {
        let rows = toy_samples(&cfg.train_data, cfg.n_samples, &mut Rng::new(cfg.seed, STREAM_TOY))?;
        return Ok(Dataset::from_rows(&rows)?);
    }
    let images: Vec<Tensor> = if cfg.train_data == "ellipses" {
        let mut rng = Rng::new(cfg.seed, STREAM_IMAGES);
        (0..cfg.n_images).map(|_| random_ellipses(cfg.side, &mut rng)).collect()
    } else {
        image_files(Path::new(&cfg.train_data))?
            .iter()
            .map(|p| read_image(p))
            .collect::<Result<_, _>>()?
    };
    let shape = images[0].shape().to_vec();
    if shape.len() != 2 || images.iter().any(|t| t.shape() != shape.as_slice()) {
        return Err(CliError::Usage("training images must be 2D and share one shape".into()));
    }
    if cfg.patch > 0 {
        let grid = PatchGrid::new(shape[0], shape[1], cfg.patch, 1)?;
        let refs: Vec<&[f64]> = images.iter().map(|t| t.data()).collect();
        Ok(Dataset::new(grid.patch_len(), grid.extract_all(&refs))?)
    } else {
        let d = shape[0] * shape[1];
        Ok(Dataset::new(
            d,
            images.into_iter().flat_map(|t| t.into_data()).collect(),
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_gaussian_moments() {
        let rows = toy_samples("gaussian", 40_000, &mut Rng::new(0, 0)).unwrap();
        let n = rows.len() as f64;
        let m0 = rows.iter().map(|r| r[0]).sum::<f64>() / n;
        let m1 = rows.iter().map(|r| r[1]).sum::<f64>() / n;
        let c01 = rows.iter().map(|r| (r[0] - m0) * (r[1] - m1)).sum::<f64>() / n;
        let c11 = rows.iter().map(|r| (r[1] - m1).powi(2)).sum::<f64>() / n;
        assert!((m0 - 1.0).abs() < 0.02 && (m1 + 0.5).abs() < 0.02);
        assert!((c01 - 0.6).abs() < 0.03 && (c11 - 0.8).abs() < 0.03);
        assert!(toy_samples("banana", 1, &mut Rng::new(0, 0)).is_err());
    }

    #[test]
    fn patch_and_whole_image_datasets() {
        let mut cfg = ExperimentConfig::for_problem(Problem::Deblur);
        cfg.side = 8;
        cfg.n_images = 2;
        let d = training_data(&cfg).unwrap();
        assert_eq!((d.dim(), d.len()), (16, 2 * 25));
        cfg.patch = 0;
        let d = training_data(&cfg).unwrap();
        assert_eq!((d.dim(), d.len()), (64, 2));
    }
}
