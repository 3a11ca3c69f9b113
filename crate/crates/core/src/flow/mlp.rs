use crate::tensor::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Smooth activation; present so uncertifiable subnets can be expressed.
    Tanh,
}

impl Activation {
    pub fn code(self) -> f64 {
        match self {
            Activation::Relu => 0.0,
            Activation::Tanh => 1.0,
        }
    }

    pub fn from_code(c: f64) -> Option<Self> {
        match c as i64 {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Fully connected network with an activation on hidden layers and a
/// linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSubnet {
    widths: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl MlpSubnet {
    /// He-initialized hidden layers; the output layer starts at zero so a
    /// fresh coupling layer is the identity.
    pub fn new(widths: &[usize], activation: Activation, rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2 && widths.iter().all(|&w| w > 0));
        let n_layers = widths.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let w = if l + 1 == n_layers {
                vec![0.0; fan_in * fan_out]
            } else {
                let std = (2.0 / fan_in as f64).sqrt();
                (0..fan_in * fan_out).map(|_| std * rng.gaussian()).collect()
            };
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        MlpSubnet {
            widths: widths.to_vec(),
            weights,
            biases,
            activation,
        }
    }

    pub fn from_parts(
        widths: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        activation: Activation,
    ) -> Option<Self> {
        let n = widths.len().checked_sub(1)?;
        if n == 0 || weights.len() != n || biases.len() != n {
            return None;
        }
        for l in 0..n {
            if weights[l].len() != widths[l] * widths[l + 1] || biases[l].len() != widths[l + 1] {
                return None;
            }
        }
        Some(MlpSubnet {
            widths,
            weights,
            biases,
            activation,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("nonempty widths")
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        &self.weights[l]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    /// Parameter slices in the order `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    /// `(suffix, shape)` for each entry of [`MlpSubnet::params`].
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for l in 0..self.n_layers() {
            out.push((format!("w{l}"), vec![self.widths[l + 1], self.widths[l]]));
            out.push((format!("b{l}"), vec![self.widths[l + 1]]));
        }
        out
    }

    fn affine(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        let w = &self.weights[l];
        let b = &self.biases[l];
        (0..fan_out)
            .map(|o| {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in 0..self.n_layers() {
            let mut pre = self.affine(l, &h);
            if l + 1 < self.n_layers() {
                pre.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            h = pre;
        }
        h
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut pres = Vec::with_capacity(self.n_layers());
        let mut h = x.to_vec();
        for l in 0..self.n_layers() {
            let pre = self.affine(l, &h);
            inputs.push(h);
            if l + 1 < self.n_layers() {
                h = pre.iter().map(|&v| self.activation.apply(v)).collect();
                pres.push(pre);
            } else {
                h = pre;
            }
        }
        (h, MlpCache { inputs, pre: pres })
    }

    /// Vector–Jacobian product: returns `Jᵀ g_out` with respect to the
    /// input and, when `grads` is given, accumulates parameter gradients
    /// (same order as [`MlpSubnet::params`]).
    pub fn backward(&self, cache: &MlpCache, g_out: &[f64], mut grads: Option<&mut [Vec<f64>]>) -> Vec<f64> {
        let mut g = g_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let input = &cache.inputs[l];
            if let Some(gr) = grads.as_deref_mut() {
                let (gw, rest) = gr[2 * l..].split_at_mut(1);
                let gw = &mut gw[0];
                let gb = &mut rest[0];
                for o in 0..fan_out {
                    let go = g[o];
                    if go == 0.0 {
                        continue;
                    }
                    gb[o] += go;
                    let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for (r, &v) in row.iter_mut().zip(input) {
                        *r += go * v;
                    }
                }
            }
            let w = &self.weights[l];
            let mut g_in = vec![0.0; fan_in];
            for o in 0..fan_out {
                let go = g[o];
                if go == 0.0 {
                    continue;
                }
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (gi, &a) in g_in.iter_mut().zip(row) {
                    *gi += go * a;
                }
            }
            if l > 0 {
                let pre = &cache.pre[l - 1];
                for (gi, &p) in g_in.iter_mut().zip(pre) {
                    *gi *= self.activation.derivative(p);
                }
            }
            g = g_in;
        }
        g
    }

    /// Perturbs every parameter by `scale * N(0, 1)`.
    pub fn perturb(&mut self, scale: f64, rng: &mut Rng) {
        for p in self.params_mut() {
            for v in p.iter_mut() {
                *v += scale * rng.gaussian();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(act: Activation) -> MlpSubnet {
        let mut rng = Rng::new(5, 0);
        let mut net = MlpSubnet::new(&[3, 8, 8, 2], act, &mut rng);
        net.perturb(0.3, &mut rng);
        net
    }

    #[test]
    fn zero_output_layer_at_init() {
        let net = MlpSubnet::new(&[2, 4, 3], Activation::Relu, &mut Rng::new(0, 0));
        assert_eq!(net.forward(&[0.3, -1.0]), vec![0.0; 3]);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        for act in [Activation::Relu, Activation::Tanh] {
            let net = random_net(act);
            let x = [0.4, -0.7, 1.1];
            let g_out = [0.9, -1.3];
            let (_, cache) = net.forward_cached(&x);
            let g = net.backward(&cache, &g_out, None);
            let h = 1e-6;
            for i in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fp: f64 = net.forward(&xp).iter().zip(g_out).map(|(a, b)| a * b).sum();
                let fm: f64 = net.forward(&xm).iter().zip(g_out).map(|(a, b)| a * b).sum();
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    (fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{act:?} {i}: {fd} vs {}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn param_grads_match_finite_differences() {
        let net = random_net(Activation::Relu);
        let x = [0.2, 0.5, -0.3];
        let g_out = [1.0, 0.5];
        let (_, cache) = net.forward_cached(&x);
        let mut grads: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        net.backward(&cache, &g_out, Some(&mut grads));
        let objective = |n: &MlpSubnet| -> f64 { n.forward(&x).iter().zip(g_out).map(|(a, b)| a * b).sum() };
        let h = 1e-6;
        for (pi, g) in grads.iter().enumerate() {
            for (k, &gk) in g.iter().enumerate() {
                let mut np = net.clone();
                np.params_mut()[pi][k] += h;
                let mut nm = net.clone();
                nm.params_mut()[pi][k] -= h;
                let fd = (objective(&np) - objective(&nm)) / (2.0 * h);
                assert!((fd - gk).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }
}
