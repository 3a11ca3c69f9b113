use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use nfula::likelihood::{simulate_observation, Likelihood, NoiseModel};
use nfula::operators::{make_blur, make_identity, make_mask, make_radon, motion_blur_kernel, ForwardOperator};
use nfula::{Rng, Tensor};

fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut q = x.to_vec();
            p[i] += h;
            q[i] -= h;
            (f(&p) - f(&q)) / (2.0 * h)
        })
        .collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

fn observed(noise: NoiseModel, op: ForwardOperator, seed: u64) -> Likelihood {
    let mut rng = Rng::new(seed, 0);
    let shape = op.input_shape().to_vec();
    let n: usize = shape.iter().product();
    let x_true = Tensor::new(shape, (0..n).map(|_| rng.uniform()).collect()).unwrap();
    let y = simulate_observation(noise, &op, &x_true, &mut rng).unwrap();
    Likelihood::new(noise, Arc::new(op), y).unwrap()
}

fn check_gradient(lik: &Likelihood, seed: u64) {
    let mut rng = Rng::new(seed, 1);
    for _ in 0..20 {
        let x: Vec<f64> = (0..lik.dim()).map(|_| rng.uniform()).collect();
        let g = lik.grad_log_likelihood_slice(&x).unwrap();
        let fd = fd_grad(|v| lik.log_likelihood_slice(v).unwrap(), &x, 1e-5);
        assert!(rel(&g, &fd) <= 1e-5, "{:?}: {}", lik.noise(), rel(&g, &fd));
    }
}

#[test]
fn gaussian_gradient_matches_finite_differences() {
    let blur = make_blur(&[8, 8], &motion_blur_kernel(3)).unwrap();
    check_gradient(&observed(NoiseModel::Gaussian { sigma: 0.1 }, blur, 1), 1);
    let radon = make_radon(8, 6, 0.0, 180.0, None).unwrap();
    check_gradient(&observed(NoiseModel::Gaussian { sigma: 0.5 }, radon, 2), 2);
}

#[test]
fn poisson_gradient_matches_finite_differences() {
    let radon = make_radon(8, 6, 0.0, 180.0, None).unwrap();
    check_gradient(&observed(NoiseModel::Poisson { n0: 1e4, mu: 0.2 }, radon, 3), 3);
}

fn dense_gram_min_eig(op: &ForwardOperator, sigma: f64) -> f64 {
    let (m, n) = (op.output_len(), op.input_len());
    let a = DMatrix::from_row_slice(m, n, &op.to_dense());
    let g = a.transpose() * &a / (sigma * sigma);
    SymmetricEigen::new(g)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn contractivity_matches_dense_spectrum() {
    let sigma = 0.2;
    let noise = NoiseModel::Gaussian { sigma };
    let id = observed(noise, make_identity(&[3, 4]), 4);
    let m = id.contractivity_constant().unwrap().unwrap();
    assert!((m - 1.0 / (sigma * sigma)).abs() <= 1e-8 * m);

    let blur = make_blur(&[6, 6], &motion_blur_kernel(3)).unwrap();
    let oracle = dense_gram_min_eig(&blur, sigma);
    let lik = observed(noise, blur, 5);
    let m = lik.contractivity_constant().unwrap().unwrap();
    assert!(m >= 0.0);
    assert!(
        (m - oracle.max(0.0)).abs() <= 1e-6 * lik.lipschitz_constant().unwrap().unwrap(),
        "{m} vs {oracle}"
    );

    let mask = make_mask(&[5, 5], 0.5, &mut Rng::new(6, 0)).unwrap();
    let m = observed(noise, mask, 6).contractivity_constant().unwrap().unwrap();
    assert!(m.abs() <= 1e-8, "{m}");
}

#[test]
fn lipschitz_constant_bounds_gradient_differences() {
    let blur = make_blur(&[8, 8], &motion_blur_kernel(5)).unwrap();
    let lik = observed(NoiseModel::Gaussian { sigma: 0.05 }, blur, 7);
    let l = lik.lipschitz_constant().unwrap().unwrap();
    let mut rng = Rng::new(7, 1);
    for _ in 0..100 {
        let a: Vec<f64> = (0..64).map(|_| rng.gaussian()).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.gaussian()).collect();
        let ga = lik.grad_log_likelihood_slice(&a).unwrap();
        let gb = lik.grad_log_likelihood_slice(&b).unwrap();
        let dg: f64 = ga.iter().zip(&gb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let dx: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(dg <= l * dx * (1.0 + 1e-9));
    }
    assert_eq!(
        observed(NoiseModel::Poisson { n0: 100.0, mu: 1.0 }, make_identity(&[4]), 8)
            .contractivity_constant()
            .unwrap(),
        None
    );
}
