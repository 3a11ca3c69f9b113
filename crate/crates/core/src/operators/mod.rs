//! Linear forward operators with exact adjoints.

pub mod phantoms;
mod radon;

use std::sync::OnceLock;

pub use radon::{fbp_reconstruct, RadonGeometry};

use crate::error::{Error, Result};
use crate::tensor::{power_iteration_spectral_norm, Rng, SparseMatrix, Tensor};

const NORM_ITERS: usize = 5000;
const NORM_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    Identity,
    /// Circular convolution per channel; `taps` lists the nonzero kernel
    /// entries as (row offset, column offset, weight).
    Blur {
        kernel: Tensor,
        taps: Vec<(isize, isize, f64)>,
    },
    /// Diagonal 0/1 selection.
    Mask {
        keep: Vec<f64>,
    },
    Radon {
        geometry: RadonGeometry,
        matrix: SparseMatrix,
    },
}

/// `A: R^d -> R^m` acting on tensors of a fixed shape.
#[derive(Debug)]
pub struct ForwardOperator {
    kind: OperatorKind,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    norm: OnceLock<f64>,
}

impl Clone for ForwardOperator {
    fn clone(&self) -> Self {
        let norm = OnceLock::new();
        if let Some(&n) = self.norm.get() {
            let _ = norm.set(n);
        }
        ForwardOperator {
            kind: self.kind.clone(),
            input_shape: self.input_shape.clone(),
            output_shape: self.output_shape.clone(),
            norm,
        }
    }
}

fn image_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w] if h > 0 && w > 0 => Ok((1, h, w)),
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok((c, h, w)),
        _ => Err(Error::BadShape {
            shape: shape.to_vec(),
            reason: "expected [h, w] or [c, h, w]".into(),
        }),
    }
}

/// Uniform horizontal motion-blur kernel: `size x size`, middle row `1/size`.
pub fn motion_blur_kernel(size: usize) -> Tensor {
    let mut k = vec![0.0; size * size];
    let mid = size / 2;
    for j in 0..size {
        k[mid * size + j] = 1.0 / size as f64;
    }
    Tensor::new(vec![size, size], k).expect("kernel shape")
}

pub fn make_identity(shape: &[usize]) -> ForwardOperator {
    ForwardOperator::from_kind(OperatorKind::Identity, shape.to_vec(), shape.to_vec())
}

pub fn make_blur(image_shape: &[usize], kernel: &Tensor) -> Result<ForwardOperator> {
    image_dims(image_shape)?;
    let (kh, kw) = match *kernel.shape() {
        [kh, kw] => (kh, kw),
        _ => {
            return Err(Error::BadShape {
                shape: kernel.shape().to_vec(),
                reason: "kernel must be 2-D".into(),
            })
        }
    };
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::BadKernel { rows: kh, cols: kw });
    }
    if !kernel.is_finite() {
        return Err(Error::non_finite("blur kernel"));
    }
    let (ch, cw) = ((kh / 2) as isize, (kw / 2) as isize);
    let taps = (0..kh)
        .flat_map(|u| (0..kw).map(move |v| (u, v)))
        .filter_map(|(u, v)| {
            let k = kernel.data()[u * kw + v];
            (k != 0.0).then_some((u as isize - ch, v as isize - cw, k))
        })
        .collect();
    Ok(ForwardOperator::from_kind(
        OperatorKind::Blur {
            kernel: kernel.clone(),
            taps,
        },
        image_shape.to_vec(),
        image_shape.to_vec(),
    ))
}

/// Keeps exactly `round(keep_fraction * d)` entries chosen without replacement.
pub fn make_mask(image_shape: &[usize], keep_fraction: f64, rng: &mut Rng) -> Result<ForwardOperator> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::invalid(format!("keep_fraction {keep_fraction} outside (0, 1]")));
    }
    let d: usize = image_shape.iter().product();
    if d == 0 {
        return Err(Error::BadShape {
            shape: image_shape.to_vec(),
            reason: "empty image".into(),
        });
    }
    let k = (keep_fraction * d as f64).round() as usize;
    let mut keep = vec![0.0; d];
    for i in rng.sample_indices(d, k) {
        keep[i] = 1.0;
    }
    make_mask_from(image_shape, keep)
}

pub fn make_mask_from(image_shape: &[usize], keep: Vec<f64>) -> Result<ForwardOperator> {
    let d: usize = image_shape.iter().product();
    if keep.len() != d || keep.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("mask must hold one 0/1 entry per pixel"));
    }
    Ok(ForwardOperator::from_kind(
        OperatorKind::Mask { keep },
        image_shape.to_vec(),
        image_shape.to_vec(),
    ))
}

/// Parallel-beam Radon transform of a `side x side` image. `n_detectors =
/// None` uses `ceil(sqrt(2) * side)` unit-spaced detectors.
pub fn make_radon(
    image_side: usize,
    n_angles: usize,
    angle_lo: f64,
    angle_hi: f64,
    n_detectors: Option<usize>,
) -> Result<ForwardOperator> {
    let geometry = RadonGeometry::new(image_side, n_angles, angle_lo, angle_hi, n_detectors)?;
    let matrix = geometry.assemble()?;
    let output_shape = vec![geometry.n_angles, geometry.n_detectors];
    Ok(ForwardOperator::from_kind(
        OperatorKind::Radon { geometry, matrix },
        vec![image_side, image_side],
        output_shape,
    ))
}

impl ForwardOperator {
    fn from_kind(kind: OperatorKind, input_shape: Vec<usize>, output_shape: Vec<usize>) -> Self {
        ForwardOperator {
            kind,
            input_shape,
            output_shape,
            norm: OnceLock::new(),
        }
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            OperatorKind::Identity => "identity",
            OperatorKind::Blur { .. } => "blur",
            OperatorKind::Mask { .. } => "mask",
            OperatorKind::Radon { .. } => "radon",
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape.iter().product()
    }

    /// `out = A x` on flat slices.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.input_len());
        assert_eq!(out.len(), self.output_len());
        match &self.kind {
            OperatorKind::Identity => out.copy_from_slice(x),
            OperatorKind::Blur { taps, .. } => self.blur(x, out, taps, 1),
            OperatorKind::Mask { keep } => {
                for ((o, &v), &k) in out.iter_mut().zip(x).zip(keep) {
                    *o = v * k;
                }
            }
            OperatorKind::Radon { matrix, .. } => matrix.matvec(x, out),
        }
    }

    /// `out = Aᵀ y` on flat slices.
    pub fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.output_len());
        assert_eq!(out.len(), self.input_len());
        match &self.kind {
            OperatorKind::Identity => out.copy_from_slice(y),
            OperatorKind::Blur { taps, .. } => self.blur(y, out, taps, -1),
            OperatorKind::Mask { keep } => {
                for ((o, &v), &k) in out.iter_mut().zip(y).zip(keep) {
                    *o = v * k;
                }
            }
            OperatorKind::Radon { matrix, .. } => matrix.matvec_t(y, out),
        }
    }

    /// Circular convolution (`sign = 1`) or correlation (`sign = -1`).
    fn blur(&self, x: &[f64], out: &mut [f64], taps: &[(isize, isize, f64)], sign: isize) {
        let (c, h, w) = image_dims(&self.input_shape).expect("validated at construction");
        let (hi, wi) = (h as isize, w as isize);
        for ch in 0..c {
            let src = &x[ch * h * w..(ch + 1) * h * w];
            let dst = &mut out[ch * h * w..(ch + 1) * h * w];
            for i in 0..hi {
                for j in 0..wi {
                    let mut acc = 0.0;
                    for &(du, dv, k) in taps {
                        let r = (i - sign * du).rem_euclid(hi) as usize;
                        let s = (j - sign * dv).rem_euclid(wi) as usize;
                        acc += k * src[r * w + s];
                    }
                    dst[i as usize * w + j as usize] = acc;
                }
            }
        }
    }

    pub fn apply_slice(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn adjoint_slice(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.input_len()];
        self.adjoint_into(y, &mut out);
        out
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check_len(x, self.input_len(), &self.input_shape)?;
        Tensor::from_raw(self.output_shape.clone(), self.apply_slice(x.data()))
    }

    pub fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        self.check_len(y, self.output_len(), &self.output_shape)?;
        Tensor::from_raw(self.input_shape.clone(), self.adjoint_slice(y.data()))
    }

    fn check_len(&self, t: &Tensor, n: usize, shape: &[usize]) -> Result<()> {
        if t.len() != n {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                got: t.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Power-iteration estimate of `‖A‖`, computed once and cached.
    pub fn operator_norm(&self) -> Result<f64> {
        if let Some(&n) = self.norm.get() {
            return Ok(n);
        }
        let n = match &self.kind {
            OperatorKind::Identity => 1.0,
            OperatorKind::Mask { keep } => {
                if keep.iter().any(|&k| k != 0.0) {
                    1.0
                } else {
                    0.0
                }
            }
            _ => power_iteration_spectral_norm(
                |v| self.apply_slice(v),
                |v| self.adjoint_slice(v),
                self.input_len(),
                NORM_ITERS,
                NORM_TOL,
            )?,
        };
        Ok(*self.norm.get_or_init(|| n))
    }

    pub fn radon_geometry(&self) -> Option<&RadonGeometry> {
        match &self.kind {
            OperatorKind::Radon { geometry, .. } => Some(geometry),
            _ => None,
        }
    }

    pub fn sparse_matrix(&self) -> Option<&SparseMatrix> {
        match &self.kind {
            OperatorKind::Radon { matrix, .. } => Some(matrix),
            _ => None,
        }
    }

    /// Dense row-major matrix of `A` (test and small-problem helper).
    pub fn to_dense(&self) -> Vec<f64> {
        let (m, d) = (self.output_len(), self.input_len());
        let mut a = vec![0.0; m * d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.apply_slice(&e);
            for i in 0..m {
                a[i * d + j] = col[i];
            }
            e[j] = 0.0;
        }
        a
    }
}
