use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowModel;

/// Square patch grid over an `h x w` image. Corners step by `stride`; a
/// final row/column of corners is added at the border when the stride does
/// not land on it, so every pixel is covered.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    height: usize,
    width: usize,
    patch: usize,
    stride: usize,
    corners: Vec<(usize, usize)>,
}

fn starts(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (0..=len - patch).step_by(stride).collect();
    if *s.last().expect("nonempty") != len - patch {
        s.push(len - patch);
    }
    s
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch: usize, stride: usize) -> Result<Self> {
        if patch == 0 || stride == 0 || patch > height || patch > width {
            return Err(Error::invalid(format!(
                "patch size {patch} / stride {stride} do not fit a {height}x{width} image"
            )));
        }
        let rows = starts(height, patch, stride);
        let cols = starts(width, patch, stride);
        let corners = rows.iter().flat_map(|&i| cols.iter().map(move |&j| (i, j))).collect();
        Ok(PatchGrid {
            height,
            width,
            patch,
            stride,
            corners,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width
    }

    pub fn image_shape(&self) -> [usize; 2] {
        [self.height, self.width]
    }

    pub fn patch_len(&self) -> usize {
        self.patch * self.patch
    }

    pub fn n_patches(&self) -> usize {
        self.corners.len()
    }

    pub fn corners(&self) -> &[(usize, usize)] {
        &self.corners
    }

    pub fn extract_one(&self, x: &[f64], k: usize, out: &mut [f64]) {
        let (i0, j0) = self.corners[k];
        let p = self.patch;
        for u in 0..p {
            let row = (i0 + u) * self.width + j0;
            out[u * p..(u + 1) * p].copy_from_slice(&x[row..row + p]);
        }
    }

    /// The extraction operator `E`: all patches, concatenated.
    pub fn extract(&self, x: &[f64]) -> Vec<f64> {
        let pl = self.patch_len();
        let mut out = vec![0.0; self.n_patches() * pl];
        for k in 0..self.n_patches() {
            self.extract_one(x, k, &mut out[k * pl..(k + 1) * pl]);
        }
        out
    }

    /// `Eᵀ`: overlap-add of concatenated patches.
    pub fn overlap_add(&self, patches: &[f64]) -> Vec<f64> {
        let mut img = vec![0.0; self.image_len()];
        self.overlap_add_into(patches, &mut img);
        img
    }

    fn overlap_add_into(&self, patches: &[f64], img: &mut [f64]) {
        let p = self.patch;
        for (k, &(i0, j0)) in self.corners.iter().enumerate() {
            let src = &patches[k * p * p..(k + 1) * p * p];
            for u in 0..p {
                let row = (i0 + u) * self.width + j0;
                for v in 0..p {
                    img[row + v] += src[u * p + v];
                }
            }
        }
    }

    /// Every patch of every image, as a flat row-major buffer.
    pub fn extract_all(&self, images: &[&[f64]]) -> Vec<f64> {
        images.iter().flat_map(|x| self.extract(x)).collect()
    }
}

/// Sum of flow log-densities over the patches of an image.
#[derive(Clone, Debug)]
pub struct PatchPrior {
    model: Arc<FlowModel>,
    grid: PatchGrid,
}

impl PatchPrior {
    pub fn new(model: Arc<FlowModel>, height: usize, width: usize, patch: usize, stride: usize) -> Result<Self> {
        let grid = PatchGrid::new(height, width, patch, stride)?;
        if model.dim() != grid.patch_len() {
            return Err(Error::invalid(format!(
                "flow dimension {} does not match {patch}x{patch} patches",
                model.dim()
            )));
        }
        Ok(PatchPrior { model, grid })
    }

    pub fn model(&self) -> &FlowModel {
        &self.model
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.grid.image_len() {
            return Err(Error::ShapeMismatch {
                expected: self.grid.image_shape().to_vec(),
                got: vec![x.len()],
            });
        }
        Ok(())
    }

    /// Per-patch scores in parallel, scattered back in patch order.
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(x)?;
        let pl = self.grid.patch_len();
        let grads: Vec<Result<Vec<f64>>> = (0..self.grid.n_patches())
            .into_par_iter()
            .map(|k| {
                let mut patch = vec![0.0; pl];
                self.grid.extract_one(x, k, &mut patch);
                self.model.log_density_and_grad(&patch).map(|(_, g)| g)
            })
            .collect();
        let mut flat = Vec::with_capacity(self.grid.n_patches() * pl);
        for g in grads {
            flat.extend(g?);
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        self.grid.overlap_add_into(&flat, out);
        Ok(())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let pl = self.grid.patch_len();
        let vals: Vec<Result<f64>> = (0..self.grid.n_patches())
            .into_par_iter()
            .map(|k| {
                let mut patch = vec![0.0; pl];
                self.grid.extract_one(x, k, &mut patch);
                self.model.log_density_slice(&patch)
            })
            .collect();
        let mut s = 0.0;
        for v in vals {
            s += v?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{dot, Rng};

    #[test]
    fn grid_covers_borders() {
        let g = PatchGrid::new(10, 7, 4, 4).unwrap();
        let rows: Vec<usize> = g.corners().iter().map(|c| c.0).collect();
        assert!(rows.contains(&6));
        assert!(g.corners().iter().any(|c| c.1 == 3));
        let cover = g.overlap_add(&vec![1.0; g.n_patches() * 16]);
        assert!(cover.iter().all(|&c| c >= 1.0));
    }

    #[test]
    fn extraction_adjointness() {
        let g = PatchGrid::new(9, 11, 3, 2).unwrap();
        let mut rng = Rng::new(0, 0);
        let x: Vec<f64> = (0..99).map(|_| rng.gaussian()).collect();
        let p: Vec<f64> = (0..g.n_patches() * 9).map(|_| rng.gaussian()).collect();
        let lhs = dot(&g.extract(&x), &p);
        let rhs = dot(&x, &g.overlap_add(&p));
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }
}
