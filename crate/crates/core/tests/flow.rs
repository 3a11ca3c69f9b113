use std::f64::consts::PI;

use nfula::flow::{
    certify_lipschitz, flow_from_checkpoint, flow_to_checkpoint, train_flow, Activation, Checkpoint, Dataset, FlowModel,
};
use nfula::Rng;
use proptest::prelude::*;

fn random_model(dim: usize, n_couplings: usize, affine: bool, seed: u64) -> FlowModel {
    let mut rng = Rng::new(seed, 0);
    let mut m = FlowModel::coupled(dim, n_couplings, None, Activation::Relu, affine, &mut rng).unwrap();
    m.perturb(0.1, true, &mut rng);
    m
}

fn gaussian_point(rng: &mut Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.gaussian()).collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

#[test]
fn inverse_then_forward_is_identity() {
    for (affine, seed) in [(false, 1), (true, 2), (false, 3)] {
        let m = random_model(6, 4, affine, seed);
        let mut rng = Rng::new(seed, 1);
        for _ in 0..50 {
            let x = gaussian_point(&mut rng, 6, 2.0);
            let (z, _) = m.inverse_slice(&x).unwrap();
            let back = m.forward_slice(&z).unwrap();
            assert!(rel(&back, &x) <= 1e-8, "affine={affine}: {}", rel(&back, &x));
        }
    }
}

#[test]
fn grad_log_density_matches_central_differences() {
    for (affine, seed) in [(false, 11), (true, 12)] {
        let m = random_model(4, 4, affine, seed);
        let mut rng = Rng::new(seed, 1);
        for _ in 0..20 {
            let x = gaussian_point(&mut rng, 4, 1.0);
            let (_, g) = m.log_density_and_grad(&x).unwrap();
            let h = 1e-6;
            let fd: Vec<f64> = (0..4)
                .map(|i| {
                    let mut p = x.clone();
                    let mut q = x.clone();
                    p[i] += h;
                    q[i] -= h;
                    (m.log_density_slice(&p).unwrap() - m.log_density_slice(&q).unwrap()) / (2.0 * h)
                })
                .collect();
            assert!(rel(&g, &fd) <= 1e-5, "affine={affine}: {}", rel(&g, &fd));
        }
    }
}

#[test]
fn additive_couplings_alone_preserve_volume() {
    let mut rng = Rng::new(21, 0);
    let mut m = FlowModel::coupled(5, 6, None, Activation::Relu, false, &mut rng).unwrap();
    m.perturb(0.5, false, &mut rng);
    for _ in 0..100 {
        let x = gaussian_point(&mut rng, 5, 3.0);
        let (_, logdet) = m.inverse_slice(&x).unwrap();
        assert_eq!(logdet, 0.0);
    }
}

#[test]
fn certified_density_is_bounded_above() {
    let m = random_model(4, 4, false, 31);
    assert!(certify_lipschitz(&m).certified);
    let bound = -2.0 * (2.0 * PI).ln() + m.actnorm_log_scale_sum();
    let mut rng = Rng::new(31, 1);
    for k in 0..10_000 {
        let radius = 10f64.powf(3.0 * k as f64 / 10_000.0);
        let mut x = gaussian_point(&mut rng, 4, 1.0);
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v *= radius / n);
        let ld = m.log_density_slice(&x).unwrap();
        assert!(ld <= bound + 1e-12, "log q = {ld} > {bound} at radius {radius}");
    }
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

#[test]
fn trained_planar_flow_integrates_to_one() {
    let mut rng = Rng::new(41, 0);
    let rows: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.uniform(), rng.uniform()]).collect();
    let data = Dataset::from_rows(&rows).unwrap();
    let mut m = FlowModel::additive(2, 4, &mut rng).unwrap();
    train_flow(&mut m, &data, 30, 128, 3e-3, 0.01, &mut rng).unwrap();
    assert!(certify_lipschitz(&m).certified);

    let n = 1000;
    let (lo, hi) = (-10.0, 10.0);
    let h = (hi - lo) / n as f64;
    let w = simpson_weights(n, h);
    let mut mass = 0.0;
    for i in 0..=n {
        for j in 0..=n {
            let x = [lo + i as f64 * h, lo + j as f64 * h];
            mass += w[i] * w[j] * m.log_density_slice(&x).unwrap().exp();
        }
    }
    assert!((0.999..=1.001).contains(&mass), "mass {mass}");
}

#[test]
fn checkpoint_round_trip_preserves_density() {
    let m = random_model(4, 3, true, 51);
    let bytes = flow_to_checkpoint(&m).to_bytes();
    let back = flow_from_checkpoint(&Checkpoint::read_from(bytes.as_slice()).unwrap()).unwrap();
    let mut rng = Rng::new(51, 1);
    for _ in 0..20 {
        let x = gaussian_point(&mut rng, 4, 1.5);
        assert_eq!(
            m.log_density_slice(&x).unwrap().to_bits(),
            back.log_density_slice(&x).unwrap().to_bits()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_and_logdet_consistency(seed in 0u64..10_000, affine in any::<bool>(), xs in prop::collection::vec(-5.0f64..5.0, 4)) {
        let m = random_model(4, 3, affine, seed);
        let (z, logdet) = m.inverse_slice(&xs).unwrap();
        let (x, ld) = m.generate_with_log_density(&z).unwrap();
        prop_assert!(rel(&x, &xs) <= 1e-8);
        let from_inverse = m.log_density_slice(&xs).unwrap();
        prop_assert!((from_inverse - ld).abs() <= 1e-8 * (1.0 + ld.abs()));
        let base = -0.5 * z.iter().map(|v| v * v).sum::<f64>() - 2.0 * (2.0 * PI).ln();
        prop_assert!((base + logdet - from_inverse).abs() <= 1e-10 * (1.0 + from_inverse.abs()));
    }
}
