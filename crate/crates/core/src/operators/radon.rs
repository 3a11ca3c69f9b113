use std::f64::consts::PI;

use super::{ForwardOperator, OperatorKind};
use crate::error::{Error, Result};
use crate::tensor::{SparseMatrix, Tensor};

/// Samples per pixel along each ray.
const RAY_STEP: f64 = 0.5;

/// Parallel-beam geometry on a `side x side` pixel grid centered at the
/// origin (unit pixels, `x` to the right, `y` up). Angle `a` is the
/// midpoint `lo + (a + 1/2)(hi - lo)/n_angles`; detector `t` sits at offset
/// `t - (n_detectors - 1)/2` along `(cos θ, sin θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadonGeometry {
    pub side: usize,
    pub n_angles: usize,
    pub angle_lo: f64,
    pub angle_hi: f64,
    pub n_detectors: usize,
}

impl RadonGeometry {
    pub fn new(side: usize, n_angles: usize, angle_lo: f64, angle_hi: f64, n_detectors: Option<usize>) -> Result<Self> {
        if side < 8 {
            return Err(Error::invalid(format!("image side {side} < 8")));
        }
        if n_angles < 2 {
            return Err(Error::invalid("need at least two angles"));
        }
        if !(angle_lo.is_finite() && angle_hi.is_finite() && angle_lo < angle_hi) {
            return Err(Error::invalid("angle range must satisfy lo < hi"));
        }
        let n_detectors = n_detectors.unwrap_or_else(|| (std::f64::consts::SQRT_2 * side as f64).ceil() as usize);
        if n_detectors == 0 {
            return Err(Error::invalid("need at least one detector"));
        }
        Ok(RadonGeometry {
            side,
            n_angles,
            angle_lo,
            angle_hi,
            n_detectors,
        })
    }

    pub fn angle_step(&self) -> f64 {
        (self.angle_hi - self.angle_lo) / self.n_angles as f64
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.n_angles)
            .map(|a| self.angle_lo + (a as f64 + 0.5) * self.angle_step())
            .collect()
    }

    pub fn detector_offset(&self, t: usize) -> f64 {
        t as f64 - (self.n_detectors as f64 - 1.0) / 2.0
    }

    fn center(&self) -> f64 {
        (self.side as f64 - 1.0) / 2.0
    }

    /// Pixel-center coordinates `(x, y)` of pixel `(i, j)`.
    pub fn pixel_xy(&self, i: usize, j: usize) -> (f64, f64) {
        (j as f64 - self.center(), self.center() - i as f64)
    }

    /// Bilinear weights of the image at continuous point `(x, y)`.
    fn bilinear(&self, x: f64, y: f64, mut emit: impl FnMut(usize, f64)) {
        let n = self.side as isize;
        let cj = x + self.center();
        let ci = self.center() - y;
        let (j0, i0) = (cj.floor(), ci.floor());
        let (fj, fi) = (cj - j0, ci - i0);
        let (j0, i0) = (j0 as isize, i0 as isize);
        for (di, wi) in [(0, 1.0 - fi), (1, fi)] {
            for (dj, wj) in [(0, 1.0 - fj), (1, fj)] {
                let (i, j) = (i0 + di, j0 + dj);
                let w = wi * wj;
                if w != 0.0 && (0..n).contains(&i) && (0..n).contains(&j) {
                    emit((i * n + j) as usize, w);
                }
            }
        }
    }

    /// Ray-driven system matrix: each ray is sampled every `RAY_STEP`
    /// pixels and bilinear weights are accumulated, scaled by the step.
    pub fn assemble(&self) -> Result<SparseMatrix> {
        let half = self.center() + 1.5;
        let reach = (half * std::f64::consts::SQRT_2).ceil();
        let n_steps = (2.0 * reach / RAY_STEP).round() as usize;
        let mut trips = Vec::new();
        for (a, theta) in self.angles().into_iter().enumerate() {
            let (c, s) = (theta.cos(), theta.sin());
            for t in 0..self.n_detectors {
                let off = self.detector_offset(t);
                let row = a * self.n_detectors + t;
                for k in 0..=n_steps {
                    let tau = -reach + k as f64 * RAY_STEP;
                    let x = off * c - tau * s;
                    let y = off * s + tau * c;
                    if x.abs() > half || y.abs() > half {
                        continue;
                    }
                    self.bilinear(x, y, |col, w| trips.push((row, col, w * RAY_STEP)));
                }
            }
        }
        SparseMatrix::from_triplets(self.n_angles * self.n_detectors, self.side * self.side, trips)
    }
}

/// Discrete Ram-Lak kernel for unit detector spacing.
fn ram_lak(k: isize) -> f64 {
    if k == 0 {
        0.25
    } else if k % 2 == 0 {
        0.0
    } else {
        -1.0 / (PI * PI * (k * k) as f64)
    }
}

/// Filtered backprojection with a spatial Ram-Lak filter and linear
/// interpolation on the detector, clamped to `[0, 1]`.
pub fn fbp_reconstruct(op: &ForwardOperator, sinogram: &Tensor) -> Result<Tensor> {
    let geo = match op.kind() {
        OperatorKind::Radon { geometry, .. } => geometry,
        _ => return Err(Error::WrongOperator { expected: "radon" }),
    };
    let (na, nd) = (geo.n_angles, geo.n_detectors);
    if sinogram.len() != na * nd {
        return Err(Error::ShapeMismatch {
            expected: vec![na, nd],
            got: sinogram.shape().to_vec(),
        });
    }
    let p = sinogram.data();
    let mut filtered = vec![0.0; na * nd];
    for a in 0..na {
        for t in 0..nd {
            let mut acc = 0.0;
            for u in 0..nd {
                acc += ram_lak(t as isize - u as isize) * p[a * nd + u];
            }
            filtered[a * nd + t] = acc;
        }
    }
    let n = geo.side;
    let mut img = vec![0.0; n * n];
    let angles: Vec<(f64, f64)> = geo.angles().iter().map(|th| (th.cos(), th.sin())).collect();
    let center_det = (nd as f64 - 1.0) / 2.0;
    for i in 0..n {
        for j in 0..n {
            let (x, y) = geo.pixel_xy(i, j);
            let mut acc = 0.0;
            for (a, &(c, s)) in angles.iter().enumerate() {
                let pos = x * c + y * s + center_det;
                let t0 = pos.floor();
                let f = pos - t0;
                let t0 = t0 as isize;
                let row = &filtered[a * nd..(a + 1) * nd];
                let at = |t: isize| {
                    if (0..nd as isize).contains(&t) {
                        row[t as usize]
                    } else {
                        0.0
                    }
                };
                acc += (1.0 - f) * at(t0) + f * at(t0 + 1);
            }
            img[i * n + j] = (acc * geo.angle_step()).clamp(0.0, 1.0);
        }
    }
    Tensor::new(vec![n, n], img)
}
