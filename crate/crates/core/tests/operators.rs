use std::f64::consts::PI;

use nalgebra::DMatrix;
use nfula::operators::{
    fbp_reconstruct, make_blur, make_mask, make_radon, motion_blur_kernel, phantoms, ForwardOperator,
};
use nfula::tensor::dot;
use nfula::{Rng, Tensor};
use proptest::prelude::*;

fn psnr(x: &[f64], reference: &[f64]) -> f64 {
    let mse = x.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    10.0 * (1.0 / mse).log10()
}

fn operators() -> Vec<ForwardOperator> {
    let mut rng = Rng::new(17, 0);
    vec![
        make_blur(&[12, 10], &motion_blur_kernel(9)).unwrap(),
        make_mask(&[12, 10], 0.2, &mut rng).unwrap(),
        make_radon(16, 12, 0.1 * PI, 0.9 * PI, None).unwrap(),
    ]
}

#[test]
fn adjointness_on_random_pairs() {
    let mut rng = Rng::new(3, 0);
    for op in operators() {
        for _ in 0..100 {
            let x: Vec<f64> = (0..op.input_len()).map(|_| rng.gaussian()).collect();
            let y: Vec<f64> = (0..op.output_len()).map(|_| rng.gaussian()).collect();
            let lhs = dot(&op.apply_slice(&x), &y);
            let rhs = dot(&x, &op.adjoint_slice(&y));
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
                "{}: {lhs} vs {rhs}",
                op.kind_name()
            );
        }
    }
}

#[test]
fn central_ray_through_disk_measures_chord() {
    let side = 64;
    let radius = 0.5;
    let c = 0.7;
    let img = phantoms::disk(side, radius, c);
    // odd detector count puts a detector on the center line
    let op = make_radon(side, 4, 0.0, PI, Some(91)).unwrap();
    let sino = op.apply(&img).unwrap();
    let half = (side as f64 - 1.0) / 2.0;
    let chord = 2.0 * radius * half;
    for a in 0..4 {
        let v = sino.data()[a * 91 + 45];
        assert!(
            (v - c * chord).abs() / (c * chord) < 0.02,
            "angle {a}: {v} vs {}",
            c * chord
        );
    }
}

#[test]
fn radon_norm_matches_dense_svd() {
    let op = make_radon(32, 60, 0.1 * PI, 0.9 * PI, Some(46)).unwrap();
    let (m, d) = (op.output_len(), op.input_len());
    let a = DMatrix::from_row_slice(m, d, &op.to_dense());
    let gram = a.transpose() * &a;
    let top = gram.symmetric_eigenvalues().max().sqrt();
    let est = op.operator_norm().unwrap();
    assert!((est - top).abs() <= 1e-4 * top, "{est} vs {top}");
}

#[test]
fn blur_norm_matches_dft_symbol() {
    let (h, w) = (16, 20);
    let op = make_blur(&[h, w], &motion_blur_kernel(9)).unwrap();
    // |Σ_v k_v e^{-iωv}| maximized over the DFT grid
    let mut best: f64 = 0.0;
    for q in 0..w {
        let om = 2.0 * PI * q as f64 / w as f64;
        let (re, im) = (-4..=4).fold((0.0, 0.0), |(r, i), v: i32| {
            (r + (om * v as f64).cos() / 9.0, i - (om * v as f64).sin() / 9.0)
        });
        best = best.max((re * re + im * im).sqrt());
    }
    assert!((op.operator_norm().unwrap() - best).abs() < 1e-6);
}

#[test]
fn radon_nonnegative() {
    let mut rng = Rng::new(8, 0);
    let op = make_radon(16, 10, 0.0, PI, None).unwrap();
    let x: Vec<f64> = (0..256).map(|_| rng.uniform()).collect();
    assert!(op.apply_slice(&x).iter().all(|&v| v >= 0.0));
}

#[test]
fn fbp_quality_and_missing_wedge() {
    let side = 64;
    let phantom = phantoms::disk(side, 0.6, 0.8);
    let full = make_radon(side, 180, 0.0, PI, None).unwrap();
    let rec = fbp_reconstruct(&full, &full.apply(&phantom).unwrap()).unwrap();
    let p_full = psnr(rec.data(), phantom.data());
    assert!(p_full >= 18.0, "full-angle FBP PSNR {p_full}");

    let limited = make_radon(side, 144, 0.1 * PI, 0.9 * PI, None).unwrap();
    let rec = fbp_reconstruct(&limited, &limited.apply(&phantom).unwrap()).unwrap();
    let p_lim = psnr(rec.data(), phantom.data());
    assert!(p_lim < p_full, "{p_lim} !< {p_full}");

    let zero = Tensor::zeros(&[180, full.output_shape()[1]]);
    assert!(fbp_reconstruct(&full, &zero).unwrap().data().iter().all(|&v| v == 0.0));
    let blur = make_blur(&[8, 8], &motion_blur_kernel(3)).unwrap();
    assert!(fbp_reconstruct(&blur, &Tensor::zeros(&[8, 8])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
        let mut rng = Rng::new(seed, 0);
        for op in operators() {
            let n = op.input_len();
            let x: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
            let comb: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let lhs = op.apply_slice(&comb);
            let ax = op.apply_slice(&x);
            let ay = op.apply_slice(&y);
            for i in 0..lhs.len() {
                let rhs = a * ax[i] + b * ay[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }
}
