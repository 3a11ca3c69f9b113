use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};

use super::Tensor;

/// Seeded counter-based generator. Parallel chains use distinct `stream`
/// ids under one seed instead of re-seeding.
#[derive(Clone, Debug)]
pub struct Rng {
    core: ChaCha20Rng,
    seed: u64,
    stream: u64,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut core = ChaCha20Rng::seed_from_u64(seed);
        core.set_stream(stream);
        Rng {
            core,
            seed,
            stream,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent generator for a sub-task, derived from this one's seed.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::new(self.seed, stream)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    /// Uniform draw in (0, 1].
    pub fn uniform(&mut self) -> f64 {
        ((self.core.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (self.uniform() - 0.5 / (1u64 << 53) as f64)
    }

    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let (z0, z1) = box_muller(u1, u2);
        self.spare = Some(z1);
        z0
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.gaussian();
        }
    }

    pub fn below(&mut self, n: usize) -> usize {
        // modulo bias is below 2^-40 for the n used in this crate
        (self.core.next_u64() % n as u64) as usize
    }

    pub fn poisson(&mut self, mean: f64) -> f64 {
        if !(mean > 0.0) {
            return 0.0;
        }
        match Poisson::new(mean) {
            Ok(p) => p.sample(&mut self.core),
            Err(_) => mean.round(),
        }
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        index::sample(&mut self.core, n, k).into_vec()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Box–Muller transform of two uniforms in (0, 1].
pub fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

pub fn gaussian_vector(rng: &mut Rng, d: usize) -> Tensor {
    let mut data = vec![0.0; d.max(1)];
    rng.fill_gaussian(&mut data);
    Tensor::from_raw(vec![data.len()], data).expect("shape matches data")
}
