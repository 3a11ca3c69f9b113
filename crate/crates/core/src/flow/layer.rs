use super::mlp::{Activation, MlpCache, MlpSubnet};
use crate::error::{Error, Result};
use crate::tensor::Rng;

const MIN_SCALE: f64 = 1e-12;
/// Offset applied before the sigmoid in affine couplings (Glow convention),
/// so zero-initialized subnets start near unit scale.
const AFFINE_SCALE_OFFSET: f64 = 2.0;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Which coordinates a coupling layer updates (`active`) and which it
/// conditions on (`passive`).
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMask {
    active: Vec<bool>,
    active_idx: Vec<usize>,
    passive_idx: Vec<usize>,
}

impl CouplingMask {
    pub fn new(active: Vec<bool>) -> Result<Self> {
        let active_idx: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
        let passive_idx: Vec<usize> = (0..active.len()).filter(|&i| !active[i]).collect();
        if active_idx.is_empty() || passive_idx.is_empty() {
            return Err(Error::invalid("coupling mask needs active and passive coordinates"));
        }
        Ok(CouplingMask {
            active,
            active_idx,
            passive_idx,
        })
    }

    /// First half passive, second half active (or the reverse for odd parity).
    pub fn split(d: usize, parity: usize) -> Result<Self> {
        let half = d / 2;
        Self::new((0..d).map(|i| (i >= half) ^ (parity % 2 == 1)).collect())
    }

    /// Checkerboard over an `h x w` grid (flattened row-major).
    pub fn checkerboard(h: usize, w: usize, parity: usize) -> Result<Self> {
        Self::new((0..h * w).map(|i| ((i / w + i % w + parity) % 2) == 1).collect())
    }

    pub fn dim(&self) -> usize {
        self.active.len()
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn n_active(&self) -> usize {
        self.active_idx.len()
    }

    pub fn n_passive(&self) -> usize {
        self.passive_idx.len()
    }

    fn gather_passive(&self, x: &[f64]) -> Vec<f64> {
        self.passive_idx.iter().map(|&i| x[i]).collect()
    }
}

/// One invertible layer. `inverse` maps the data side toward the latent
/// side (`x -> z`); `forward` is the generative direction.
#[derive(Clone, Debug, PartialEq)]
pub enum FlowLayer {
    AdditiveCoupling {
        mask: CouplingMask,
        subnet: MlpSubnet,
    },
    AffineCoupling {
        mask: CouplingMask,
        scale_net: MlpSubnet,
        shift_net: MlpSubnet,
    },
    ActNorm {
        scale: Vec<f64>,
        bias: Vec<f64>,
        initialized: bool,
    },
    Permutation {
        perm: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
pub(crate) enum LayerCache {
    ActNorm {
        x: Vec<f64>,
    },
    Additive {
        net: MlpCache,
    },
    Affine {
        x_active: Vec<f64>,
        s: Vec<f64>,
        scale: MlpCache,
        shift: MlpCache,
    },
    Permutation,
}

impl FlowLayer {
    pub fn additive(mask: CouplingMask, hidden: &[usize], activation: Activation, rng: &mut Rng) -> Self {
        let mut widths = vec![mask.n_passive()];
        widths.extend_from_slice(hidden);
        widths.push(mask.n_active());
        FlowLayer::AdditiveCoupling {
            subnet: MlpSubnet::new(&widths, activation, rng),
            mask,
        }
    }

    pub fn affine(mask: CouplingMask, hidden: &[usize], activation: Activation, rng: &mut Rng) -> Self {
        let mut widths = vec![mask.n_passive()];
        widths.extend_from_slice(hidden);
        widths.push(mask.n_active());
        FlowLayer::AffineCoupling {
            scale_net: MlpSubnet::new(&widths, activation, rng),
            shift_net: MlpSubnet::new(&widths, activation, rng),
            mask,
        }
    }

    /// Identity ActNorm awaiting data-dependent initialization.
    pub fn actnorm(d: usize) -> Self {
        FlowLayer::ActNorm {
            scale: vec![1.0; d],
            bias: vec![0.0; d],
            initialized: false,
        }
    }

    pub fn actnorm_with(scale: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if scale.len() != bias.len() {
            return Err(Error::invalid("ActNorm scale and bias lengths differ"));
        }
        if let Some((i, &s)) = scale.iter().enumerate().find(|(_, s)| s.abs() < MIN_SCALE) {
            return Err(Error::SingularScale { index: i, value: s });
        }
        Ok(FlowLayer::ActNorm {
            scale,
            bias,
            initialized: true,
        })
    }

    pub fn permutation(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::invalid("permutation is not a bijection"));
            }
            seen[p] = true;
        }
        Ok(FlowLayer::Permutation { perm })
    }

    pub fn reverse_permutation(d: usize) -> Self {
        FlowLayer::Permutation {
            perm: (0..d).rev().collect(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FlowLayer::AdditiveCoupling { .. } => "additive",
            FlowLayer::AffineCoupling { .. } => "affine",
            FlowLayer::ActNorm { .. } => "actnorm",
            FlowLayer::Permutation { .. } => "permutation",
        }
    }

    /// Dimension the layer acts on.
    pub fn dim(&self) -> usize {
        match self {
            FlowLayer::AdditiveCoupling { mask, .. } | FlowLayer::AffineCoupling { mask, .. } => mask.dim(),
            FlowLayer::ActNorm { scale, .. } => scale.len(),
            FlowLayer::Permutation { perm } => perm.len(),
        }
    }

    /// `log|det J|` of the layer's `x -> z` map, for layers where it does
    /// not depend on the input.
    pub fn constant_logdet(&self) -> Option<f64> {
        match self {
            FlowLayer::AdditiveCoupling { .. } | FlowLayer::Permutation { .. } => Some(0.0),
            FlowLayer::ActNorm { scale, .. } => Some(scale.iter().map(|s| s.abs().ln()).sum()),
            FlowLayer::AffineCoupling { .. } => None,
        }
    }

    fn affine_scale(scale_net: &MlpSubnet, x_p: &[f64]) -> Vec<f64> {
        scale_net
            .forward(x_p)
            .into_iter()
            .map(|h| sigmoid(h + AFFINE_SCALE_OFFSET))
            .collect()
    }

    /// `x -> (z, log|det J|)`.
    pub fn inverse(&self, x: &[f64]) -> (Vec<f64>, f64) {
        match self {
            FlowLayer::ActNorm { scale, bias, .. } => {
                let z = x.iter().zip(scale).zip(bias).map(|((v, s), b)| s * v + b).collect();
                (z, self.constant_logdet().unwrap_or(0.0))
            }
            FlowLayer::AdditiveCoupling { mask, subnet } => {
                let eta = subnet.forward(&mask.gather_passive(x));
                let mut z = x.to_vec();
                for (k, &i) in mask.active_idx.iter().enumerate() {
                    z[i] += eta[k];
                }
                (z, 0.0)
            }
            FlowLayer::AffineCoupling {
                mask,
                scale_net,
                shift_net,
            } => {
                let x_p = mask.gather_passive(x);
                let s = Self::affine_scale(scale_net, &x_p);
                let t = shift_net.forward(&x_p);
                let mut z = x.to_vec();
                let mut logdet = 0.0;
                for (k, &i) in mask.active_idx.iter().enumerate() {
                    z[i] = s[k] * x[i] + t[k];
                    logdet += s[k].ln();
                }
                (z, logdet)
            }
            FlowLayer::Permutation { perm } => (perm.iter().map(|&p| x[p]).collect(), 0.0),
        }
    }

    pub(crate) fn inverse_cached(&self, x: &[f64]) -> (Vec<f64>, f64, LayerCache) {
        match self {
            FlowLayer::ActNorm { .. } => {
                let (z, ld) = self.inverse(x);
                (z, ld, LayerCache::ActNorm { x: x.to_vec() })
            }
            FlowLayer::AdditiveCoupling { mask, subnet } => {
                let (eta, net) = subnet.forward_cached(&mask.gather_passive(x));
                let mut z = x.to_vec();
                for (k, &i) in mask.active_idx.iter().enumerate() {
                    z[i] += eta[k];
                }
                (z, 0.0, LayerCache::Additive { net })
            }
            FlowLayer::AffineCoupling {
                mask,
                scale_net,
                shift_net,
            } => {
                let x_p = mask.gather_passive(x);
                let (h, scale) = scale_net.forward_cached(&x_p);
                let (t, shift) = shift_net.forward_cached(&x_p);
                let s: Vec<f64> = h.iter().map(|&v| sigmoid(v + AFFINE_SCALE_OFFSET)).collect();
                let mut z = x.to_vec();
                let mut logdet = 0.0;
                let mut x_active = Vec::with_capacity(mask.n_active());
                for (k, &i) in mask.active_idx.iter().enumerate() {
                    x_active.push(x[i]);
                    z[i] = s[k] * x[i] + t[k];
                    logdet += s[k].ln();
                }
                (
                    z,
                    logdet,
                    LayerCache::Affine {
                        x_active,
                        s,
                        scale,
                        shift,
                    },
                )
            }
            FlowLayer::Permutation { .. } => {
                let (z, ld) = self.inverse(x);
                (z, ld, LayerCache::Permutation)
            }
        }
    }

    /// Generative direction `z -> x`.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            FlowLayer::ActNorm { scale, bias, .. } => {
                if let Some((i, &s)) = scale.iter().enumerate().find(|(_, s)| s.abs() < MIN_SCALE) {
                    return Err(Error::SingularScale { index: i, value: s });
                }
                Ok(z.iter().zip(scale).zip(bias).map(|((v, s), b)| (v - b) / s).collect())
            }
            FlowLayer::AdditiveCoupling { mask, subnet } => {
                let eta = subnet.forward(&mask.gather_passive(z));
                let mut x = z.to_vec();
                for (k, &i) in mask.active_idx.iter().enumerate() {
                    x[i] -= eta[k];
                }
                Ok(x)
            }
            FlowLayer::AffineCoupling {
                mask,
                scale_net,
                shift_net,
            } => {
                let z_p = mask.gather_passive(z);
                let s = Self::affine_scale(scale_net, &z_p);
                let t = shift_net.forward(&z_p);
                let mut x = z.to_vec();
                for (k, &i) in mask.active_idx.iter().enumerate() {
                    x[i] = (z[i] - t[k]) / s[k];
                }
                Ok(x)
            }
            FlowLayer::Permutation { perm } => {
                let mut x = vec![0.0; z.len()];
                for (k, &p) in perm.iter().enumerate() {
                    x[p] = z[k];
                }
                Ok(x)
            }
        }
    }

    /// `log|det J_{x->z}|` evaluated from the latent-side value, which is
    /// what the generative pass has available.
    pub fn logdet_from_output(&self, z: &[f64]) -> f64 {
        match self {
            FlowLayer::AffineCoupling { mask, scale_net, .. } => {
                // passive coordinates pass through unchanged
                let z_p = mask.gather_passive(z);
                Self::affine_scale(scale_net, &z_p).iter().map(|s| s.ln()).sum()
            }
            other => other.constant_logdet().unwrap_or(0.0),
        }
    }

    /// Reverse-mode step. Given `g_z = ∂L/∂z` and `c_logdet = ∂L/∂logdet`,
    /// returns `∂L/∂x` and accumulates parameter gradients into `grads`
    /// (ordered like [`FlowLayer::params`]).
    pub(crate) fn backward(
        &self,
        cache: &LayerCache,
        g_z: &[f64],
        c_logdet: f64,
        grads: Option<&mut [Vec<f64>]>,
    ) -> Vec<f64> {
        match (self, cache) {
            (FlowLayer::ActNorm { scale, .. }, LayerCache::ActNorm { x }) => {
                if let Some(g) = grads {
                    for j in 0..scale.len() {
                        g[0][j] += g_z[j] * x[j] + c_logdet / scale[j];
                        g[1][j] += g_z[j];
                    }
                }
                g_z.iter().zip(scale).map(|(g, s)| g * s).collect()
            }
            (FlowLayer::AdditiveCoupling { mask, subnet }, LayerCache::Additive { net }) => {
                let g_eta: Vec<f64> = mask.active_idx.iter().map(|&i| g_z[i]).collect();
                let g_p = subnet.backward(net, &g_eta, grads);
                let mut g_x = g_z.to_vec();
                for (k, &i) in mask.passive_idx.iter().enumerate() {
                    g_x[i] += g_p[k];
                }
                g_x
            }
            (
                FlowLayer::AffineCoupling {
                    mask,
                    scale_net,
                    shift_net,
                },
                LayerCache::Affine {
                    x_active,
                    s,
                    scale,
                    shift,
                },
            ) => {
                let mut g_x = g_z.to_vec();
                let mut g_h = Vec::with_capacity(mask.n_active());
                let mut g_t = Vec::with_capacity(mask.n_active());
                for (k, &i) in mask.active_idx.iter().enumerate() {
                    g_x[i] = s[k] * g_z[i];
                    let g_s = g_z[i] * x_active[k] + c_logdet / s[k];
                    g_h.push(g_s * s[k] * (1.0 - s[k]));
                    g_t.push(g_z[i]);
                }
                let (g_scale, g_shift) = match grads {
                    Some(g) => {
                        let n_scale = 2 * scale_net.n_layers();
                        let (a, b) = g.split_at_mut(n_scale);
                        (
                            scale_net.backward(scale, &g_h, Some(a)),
                            shift_net.backward(shift, &g_t, Some(b)),
                        )
                    }
                    None => (
                        scale_net.backward(scale, &g_h, None),
                        shift_net.backward(shift, &g_t, None),
                    ),
                };
                for (k, &i) in mask.passive_idx.iter().enumerate() {
                    g_x[i] += g_scale[k] + g_shift[k];
                }
                g_x
            }
            (FlowLayer::Permutation { perm }, LayerCache::Permutation) => {
                let mut g_x = vec![0.0; g_z.len()];
                for (k, &p) in perm.iter().enumerate() {
                    g_x[p] += g_z[k];
                }
                g_x
            }
            _ => unreachable!("cache does not belong to this layer"),
        }
    }

    /// Trainable parameter slices.
    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            FlowLayer::ActNorm { scale, bias, .. } => vec![scale, bias],
            FlowLayer::AdditiveCoupling { subnet, .. } => subnet.params(),
            FlowLayer::AffineCoupling {
                scale_net, shift_net, ..
            } => {
                let mut p = scale_net.params();
                p.extend(shift_net.params());
                p
            }
            FlowLayer::Permutation { .. } => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            FlowLayer::ActNorm { scale, bias, .. } => vec![scale.as_mut_slice(), bias.as_mut_slice()],
            FlowLayer::AdditiveCoupling { subnet, .. } => subnet.params_mut(),
            FlowLayer::AffineCoupling {
                scale_net, shift_net, ..
            } => {
                let mut p = scale_net.params_mut();
                p.extend(shift_net.params_mut());
                p
            }
            FlowLayer::Permutation { .. } => Vec::new(),
        }
    }

    /// `(role, shape)` of each entry of [`FlowLayer::params`].
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        match self {
            FlowLayer::ActNorm { scale, .. } => {
                vec![("scale".into(), vec![scale.len()]), ("bias".into(), vec![scale.len()])]
            }
            FlowLayer::AdditiveCoupling { subnet, .. } => subnet.param_layout(),
            FlowLayer::AffineCoupling {
                scale_net, shift_net, ..
            } => {
                let mut l: Vec<_> = scale_net
                    .param_layout()
                    .into_iter()
                    .map(|(n, s)| (format!("scale.{n}"), s))
                    .collect();
                l.extend(
                    shift_net
                        .param_layout()
                        .into_iter()
                        .map(|(n, s)| (format!("shift.{n}"), s)),
                );
                l
            }
            FlowLayer::Permutation { .. } => Vec::new(),
        }
    }
}
