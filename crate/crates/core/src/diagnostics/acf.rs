use rayon::prelude::*;

use super::haar::haar_dwt2;
use crate::error::{Error, Result};
use crate::samplers::SampleStore;
use crate::tensor::Rng;

pub const DEFAULT_MAX_LAG: usize = 100;

/// `ω(l)` for `l = 0..=max_lag` along one chain coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct AcfCurve {
    pub band: String,
    pub index: usize,
    pub values: Vec<f64>,
}

impl AcfCurve {
    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    pub fn label(&self) -> String {
        format!("{}[{}]", self.band, self.index)
    }
}

/// Sample autocorrelation with the single global mean:
/// `ω(l) = Σ_{t<n-l} (Y_{t+l} - Ȳ)(Y_t - Ȳ) / Σ_t (Y_t - Ȳ)²`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag < 1 || n <= max_lag {
        return Err(Error::invalid(format!("acf needs length {n} > max_lag {max_lag} >= 1")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = series.iter().map(|y| y - mean).collect();
    let denom: f64 = c.iter().map(|v| v * v).sum();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::DegenerateSeries);
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    for l in 1..=max_lag {
        let num: f64 = c[l..].iter().zip(&c[..n - l]).map(|(a, b)| a * b).sum();
        out.push(num / denom);
    }
    Ok(out)
}

/// ACF curves of one wavelet band plus the pointwise envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct BandAcf {
    pub band: String,
    pub curves: Vec<AcfCurve>,
    /// Selected coordinates skipped for zero variance.
    pub degenerate: usize,
    pub min: Vec<f64>,
    pub median: Vec<f64>,
    pub max: Vec<f64>,
}

fn envelope(curves: &[AcfCurve], max_lag: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    if curves.is_empty() {
        return (Vec::new(), Vec::new(), Vec::new());
    }
    let mut lo = Vec::with_capacity(max_lag + 1);
    let mut med = Vec::with_capacity(max_lag + 1);
    let mut hi = Vec::with_capacity(max_lag + 1);
    for l in 0..=max_lag {
        let mut col: Vec<f64> = curves.iter().map(|c| c.values[l]).collect();
        col.sort_by(f64::total_cmp);
        let k = col.len();
        lo.push(col[0]);
        hi.push(col[k - 1]);
        med.push(if k % 2 == 1 {
            col[k / 2]
        } else {
            0.5 * (col[k / 2 - 1] + col[k / 2])
        });
    }
    (lo, med, hi)
}

/// Single-level Haar transform of every retained sample; ACF along
/// `n_dims_per_band` random coordinates of the finest detail band (YH) and
/// of the low-pass band (YL).
pub fn chain_acf_bands(
    store: &SampleStore,
    n_dims_per_band: usize,
    max_lag: usize,
    rng: &mut Rng,
) -> Result<Vec<BandAcf>> {
    let shape = store.sample_shape();
    if shape.len() < 2 {
        return Err(Error::BadShape {
            shape: shape.to_vec(),
            reason: "chain samples must be images".into(),
        });
    }
    if store.len() < max_lag + 2 {
        return Err(Error::invalid(format!(
            "store holds {} samples; need at least max_lag + 2 = {}",
            store.len(),
            max_lag + 2
        )));
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let (yh_len, yl_len) = (3 * (h / 2) * (w / 2), (h / 2) * (w / 2));
    let yh_idx = rng.sample_indices(yh_len, n_dims_per_band.min(yh_len));
    let yl_idx = rng.sample_indices(yl_len, n_dims_per_band.min(yl_len));
    let mut yh_series = vec![Vec::with_capacity(store.len()); yh_idx.len()];
    let mut yl_series = vec![Vec::with_capacity(store.len()); yl_idx.len()];
    let mut failure = None;
    store.for_each(|s| {
        if failure.is_some() {
            return;
        }
        let img = &s[s.len() - h * w..];
        match haar_dwt2(img, h, w, 1) {
            Ok((yl, yh)) => {
                let fine = &yh[0];
                for (series, &i) in yh_series.iter_mut().zip(&yh_idx) {
                    series.push(fine[i]);
                }
                for (series, &i) in yl_series.iter_mut().zip(&yl_idx) {
                    series.push(yl[i]);
                }
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let band = |name: &str, idx: &[usize], series: Vec<Vec<f64>>| -> Result<BandAcf> {
        let results: Vec<Result<Vec<f64>>> = series.par_iter().map(|s| acf(s, max_lag)).collect();
        let mut curves = Vec::new();
        let mut degenerate = 0;
        for (&i, r) in idx.iter().zip(results) {
            match r {
                Ok(values) => curves.push(AcfCurve {
                    band: name.to_string(),
                    index: i,
                    values,
                }),
                Err(Error::DegenerateSeries) => degenerate += 1,
                Err(e) => return Err(e),
            }
        }
        let (min, median, max) = envelope(&curves, max_lag);
        Ok(BandAcf {
            band: name.to_string(),
            curves,
            degenerate,
            min,
            median,
            max,
        })
    };
    Ok(vec![band("YH", &yh_idx, yh_series)?, band("YL", &yl_idx, yl_series)?])
}
