//! Numerical checks of the regularized posterior in one dimension.

use crate::error::{Error, Result};
use crate::priors::Prior;
use crate::tensor::quadrature_integrate_1d;

/// Tail increments below this stop the widening.
const TAIL_TOL: f64 = 1e-12;
/// Give up once the integration domain reaches this radius.
const MAX_RADIUS: f64 = 1e3;

#[derive(Clone, Debug, PartialEq)]
pub struct MomentValue {
    pub k: u32,
    pub value: f64,
    /// Half-width beyond the box at which the tail increment fell below
    /// the tolerance.
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub lambda: f64,
    pub lo: f64,
    pub hi: f64,
    pub moments: Vec<MomentValue>,
}

fn simpson_fine(f: &impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = ((b - a) / h).ceil().max(2.0) as usize;
    quadrature_integrate_1d(f, a, b, n)
}

/// `∫ |x|^k exp(-(x - Π_C x)² / (2λ)) dx` for `C = [lo, hi]` and every
/// `k ≤ k_max`. Each tail is integrated over doubling segments until a
/// segment contributes less than `1e-12`.
pub fn verify_finite_moments(lambda: f64, lo: f64, hi: f64, k_max: u32) -> Result<MomentReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda must be positive"));
    }
    if !(lo <= hi) {
        return Err(Error::invalid("interval needs lo <= hi"));
    }
    let h = 0.005 * lambda.sqrt();
    let mut moments = Vec::new();
    for k in 0..=k_max {
        let pow = |x: f64| x.abs().powi(k as i32);
        let interior = if lo < 0.0 && hi > 0.0 {
            simpson_fine(&pow, lo, 0.0, h.min((hi - lo) / 2000.0))
                + simpson_fine(&pow, 0.0, hi, h.min((hi - lo) / 2000.0))
        } else {
            simpson_fine(&pow, lo, hi, h.min((hi - lo).max(1e-300) / 2000.0))
        };
        let upper = |x: f64| pow(x) * (-(x - hi).powi(2) / (2.0 * lambda)).exp();
        let lower = |x: f64| pow(x) * (-(x - lo).powi(2) / (2.0 * lambda)).exp();
        let mut r = 4.0 * lambda.sqrt();
        let mut tails = simpson_fine(&upper, hi, hi + r, h) + simpson_fine(&lower, lo - r, lo, h);
        loop {
            let next = 2.0 * r;
            if hi.abs().max(lo.abs()) + next > MAX_RADIUS {
                return Err(Error::TailNotDecaying(format!(
                    "k = {k}, lambda = {lambda}: tail still contributing at radius {r}"
                )));
            }
            let inc = simpson_fine(&upper, hi + r, hi + next, h) + simpson_fine(&lower, lo - next, lo - r, h);
            tails += inc;
            r = next;
            if inc.abs() < TAIL_TOL {
                break;
            }
        }
        let value = interior + tails;
        if !value.is_finite() {
            return Err(Error::non_finite(format!("moment k = {k}")));
        }
        moments.push(MomentValue { k, value, radius: r });
    }
    Ok(MomentReport {
        lambda,
        lo,
        hi,
        moments,
    })
}

/// Grid and regularization used by [`verify_well_posedness`].
#[derive(Clone, Debug, PartialEq)]
pub struct WellPosednessSettings {
    pub lambda: f64,
    pub box_lo: f64,
    pub box_hi: f64,
    pub domain: (f64, f64),
    pub n_points: usize,
}

impl Default for WellPosednessSettings {
    fn default() -> Self {
        WellPosednessSettings {
            lambda: 1.0,
            box_lo: -100.0,
            box_hi: 100.0,
            domain: (-10.0, 10.0),
            n_points: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairTv {
    pub y1: f64,
    pub y2: f64,
    pub tv: f64,
    /// `TV / |y1 - y2|`; `None` for coincident observations.
    pub slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WellPosednessReport {
    pub pairs: Vec<PairTv>,
    /// Largest observed slope, an estimate of the local Lipschitz constant.
    pub lipschitz_estimate: f64,
    /// max/min slope over pairs with distinct observations.
    pub slope_ratio: f64,
    pub bounded: bool,
}

/// Normalized regularized posterior on `grid` for observation `y`, with
/// Gaussian likelihood `N(y; x, σ²)`.
fn posterior_on_grid(
    log_prior: &[f64],
    grid: &[f64],
    y: f64,
    sigma: f64,
    s: &WellPosednessSettings,
    h: f64,
) -> Vec<f64> {
    let logp: Vec<f64> = grid
        .iter()
        .zip(log_prior)
        .map(|(&x, &lq)| {
            let dist = x - x.clamp(s.box_lo, s.box_hi);
            -(y - x).powi(2) / (2.0 * sigma * sigma) + lq - dist * dist / (2.0 * s.lambda)
        })
        .collect();
    let m = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let p: Vec<f64> = logp.iter().map(|v| (v - m).exp()).collect();
    let z = simpson_weights_sum(&p, h);
    p.into_iter().map(|v| v / z).collect()
}

fn simpson_weights_sum(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    let mut acc = f[0] + f[n];
    for (i, v) in f.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * v;
    }
    acc * h / 3.0
}

/// Total-variation distance `½∫|p(·|y₁) - p(·|y₂)|` between regularized
/// posteriors of a 1D prior for each observation pair, and the spread of
/// `TV/|Δy|` across pairs.
pub fn verify_well_posedness(
    prior: &Prior,
    sigma: f64,
    y_pairs: &[(f64, f64)],
    settings: &WellPosednessSettings,
) -> Result<WellPosednessReport> {
    if prior.dim().is_some_and(|d| d != 1) {
        return Err(Error::invalid("well-posedness check needs a 1D prior"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    if y_pairs.is_empty() {
        return Err(Error::Empty);
    }
    let (a, b) = settings.domain;
    if !(a < b) || settings.n_points < 2 || !(settings.lambda > 0.0) {
        return Err(Error::invalid("bad well-posedness grid settings"));
    }
    let n = (settings.n_points + 1) & !1;
    let h = (b - a) / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| a + i as f64 * h).collect();
    let log_prior = grid
        .iter()
        .map(|&x| prior.log_density_slice(&[x]))
        .collect::<Result<Vec<f64>>>()?;
    let mut pairs = Vec::with_capacity(y_pairs.len());
    for &(y1, y2) in y_pairs {
        let p1 = posterior_on_grid(&log_prior, &grid, y1, sigma, settings, h);
        let p2 = posterior_on_grid(&log_prior, &grid, y2, sigma, settings, h);
        let diff: Vec<f64> = p1.iter().zip(&p2).map(|(u, v)| (u - v).abs()).collect();
        let tv = 0.5 * simpson_weights_sum(&diff, h);
        if !tv.is_finite() {
            return Err(Error::non_finite("posterior TV distance"));
        }
        let dy = (y1 - y2).abs();
        pairs.push(PairTv {
            y1,
            y2,
            tv,
            slope: (dy > 0.0).then(|| tv / dy),
        });
    }
    let slopes: Vec<f64> = pairs.iter().filter_map(|p| p.slope).collect();
    let (mn, mx) = slopes
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let slope_ratio = if slopes.is_empty() { 1.0 } else { mx / mn };
    Ok(WellPosednessReport {
        pairs,
        lipschitz_estimate: mx,
        slope_ratio,
        bounded: slope_ratio.is_finite() && slope_ratio <= 10.0,
    })
}
