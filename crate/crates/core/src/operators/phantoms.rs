//! Synthetic test images on `[0, 1]`, in normalized coordinates
//! `u, v ∈ [-1, 1]` (`u` to the right, `v` up).

use crate::tensor::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub value: f64,
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    /// Rotation in radians, counter-clockwise.
    pub angle: f64,
}

impl Ellipse {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (du, dv) = (u - self.cx, v - self.cy);
        let p = (du * c + dv * s) / self.a;
        let q = (-du * s + dv * c) / self.b;
        p * p + q * q <= 1.0
    }
}

fn normalized(side: usize, i: usize, j: usize) -> (f64, f64) {
    let h = (side as f64 - 1.0) / 2.0;
    ((j as f64 - h) / h.max(1.0), (h - i as f64) / h.max(1.0))
}

/// Sum of ellipse intensities, clamped to `[0, 1]`.
pub fn ellipses(side: usize, shapes: &[Ellipse]) -> Tensor {
    let mut img = vec![0.0; side * side];
    for i in 0..side {
        for j in 0..side {
            let (u, v) = normalized(side, i, j);
            let s: f64 = shapes.iter().filter(|e| e.contains(u, v)).map(|e| e.value).sum();
            img[i * side + j] = s.clamp(0.0, 1.0);
        }
    }
    Tensor::new(vec![side, side], img).expect("finite phantom")
}

/// Centered disk of the given normalized radius.
pub fn disk(side: usize, radius: f64, value: f64) -> Tensor {
    ellipses(
        side,
        &[Ellipse {
            value,
            cx: 0.0,
            cy: 0.0,
            a: radius,
            b: radius,
            angle: 0.0,
        }],
    )
}

/// Disk phantom used by the desk-scale experiments: a bright disk with two
/// smaller inclusions.
pub fn disk_phantom(side: usize) -> Tensor {
    ellipses(
        side,
        &[
            Ellipse {
                value: 0.8,
                cx: 0.0,
                cy: 0.0,
                a: 0.7,
                b: 0.7,
                angle: 0.0,
            },
            Ellipse {
                value: -0.5,
                cx: -0.25,
                cy: 0.2,
                a: 0.2,
                b: 0.2,
                angle: 0.0,
            },
            Ellipse {
                value: 0.2,
                cx: 0.25,
                cy: -0.2,
                a: 0.15,
                b: 0.15,
                angle: 0.0,
            },
        ],
    )
}

/// Modified Shepp–Logan head phantom (higher-contrast variant).
pub fn shepp_logan(side: usize) -> Tensor {
    let d = |deg: f64| deg.to_radians();
    let spec = [
        (1.0, 0.0, 0.0, 0.69, 0.92, 0.0),
        (-0.8, 0.0, -0.0184, 0.6624, 0.874, 0.0),
        (-0.2, 0.22, 0.0, 0.11, 0.31, d(-18.0)),
        (-0.2, -0.22, 0.0, 0.16, 0.41, d(18.0)),
        (0.1, 0.0, 0.35, 0.21, 0.25, 0.0),
        (0.1, 0.0, 0.1, 0.046, 0.046, 0.0),
        (0.1, 0.0, -0.1, 0.046, 0.046, 0.0),
        (0.1, -0.08, -0.605, 0.046, 0.023, 0.0),
        (0.1, 0.0, -0.606, 0.023, 0.023, 0.0),
        (0.1, 0.06, -0.605, 0.023, 0.046, 0.0),
    ];
    let shapes: Vec<Ellipse> = spec
        .iter()
        .map(|&(value, cx, cy, a, b, angle)| Ellipse {
            value,
            cx,
            cy,
            a,
            b,
            angle,
        })
        .collect();
    ellipses(side, &shapes)
}

/// Random piecewise-constant image: a large background ellipse with a few
/// brighter or darker inclusions. Used as prior training data.
pub fn random_ellipses(side: usize, rng: &mut Rng) -> Tensor {
    let mut shapes = vec![Ellipse {
        value: rng.uniform_range(0.3, 0.9),
        cx: rng.uniform_range(-0.15, 0.15),
        cy: rng.uniform_range(-0.15, 0.15),
        a: rng.uniform_range(0.5, 0.85),
        b: rng.uniform_range(0.5, 0.85),
        angle: rng.uniform_range(0.0, std::f64::consts::PI),
    }];
    let n = 1 + rng.below(4);
    for _ in 0..n {
        shapes.push(Ellipse {
            value: rng.uniform_range(-0.4, 0.3),
            cx: rng.uniform_range(-0.45, 0.45),
            cy: rng.uniform_range(-0.45, 0.45),
            a: rng.uniform_range(0.08, 0.3),
            b: rng.uniform_range(0.08, 0.3),
            angle: rng.uniform_range(0.0, std::f64::consts::PI),
        });
    }
    ellipses(side, &shapes)
}

/// Alternating `block x block` squares of 0 and 1.
pub fn checkerboard(side: usize, block: usize) -> Tensor {
    let block = block.max(1);
    let data = (0..side * side)
        .map(|k| (((k / side) / block + (k % side) / block) % 2) as f64)
        .collect();
    Tensor::new(vec![side, side], data).expect("finite phantom")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_area_matches_circle() {
        let side = 128;
        let img = disk(side, 0.5, 1.0);
        let area_px: f64 = img.data().iter().sum();
        let h = (side as f64 - 1.0) / 2.0;
        let expected = std::f64::consts::PI * (0.5 * h) * (0.5 * h);
        assert!((area_px - expected).abs() / expected < 0.02);
    }

    #[test]
    fn phantoms_in_unit_range() {
        let mut rng = Rng::new(1, 0);
        for img in [
            shepp_logan(64),
            disk_phantom(32),
            random_ellipses(32, &mut rng),
            checkerboard(8, 2),
        ] {
            assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert_eq!(checkerboard(4, 2).data()[..4], [0.0, 0.0, 1.0, 1.0]);
    }
}
