//! PSNR, autocorrelation over Haar bands, 1D Wasserstein distance,
//! theory checks and the CSV report.

mod acf;
mod haar;
mod verify;

use std::fmt::Write as _;
use std::path::Path;

pub use acf::{acf, chain_acf_bands, AcfCurve, BandAcf, DEFAULT_MAX_LAG};
pub use haar::{dwt2, idwt2};
pub use verify::{
    verify_finite_moments, verify_well_posedness, MomentReport, MomentValue, PairTv, WellPosednessReport,
    WellPosednessSettings,
};

use crate::error::{Error, Result};
use crate::format::g17;
use crate::tensor::Tensor;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 200.0;

/// `10 log₁₀(max_val² / MSE)`, capped at 200 dB.
pub fn psnr(x: &Tensor, reference: &Tensor, max_val: f64) -> Result<f64> {
    if x.shape() != reference.shape() {
        return Err(Error::ShapeMismatch {
            expected: reference.shape().to_vec(),
            got: x.shape().to_vec(),
        });
    }
    if !(max_val > 0.0) {
        return Err(Error::invalid("max_val must be positive"));
    }
    let mse = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (max_val * max_val / mse).log10()).min(PSNR_CAP))
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Linear-interpolated quantile at level `p` of a sorted sample, with the
/// `i`-th order statistic placed at `(i + 1/2)/n`.
fn quantile(s: &[f64], p: f64) -> f64 {
    let n = s.len();
    let pos = (p * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < n {
        s[i] + f * (s[i + 1] - s[i])
    } else {
        s[i]
    }
}

/// Wasserstein-1 distance between two empirical 1D distributions: mean
/// absolute difference of quantiles on a common grid of
/// `max(len(a), len(b))` levels.
pub fn wasserstein1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty);
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let m = sa.len().max(sb.len());
    let total: f64 = (0..m)
        .map(|i| {
            let p = (i as f64 + 0.5) / m as f64;
            (quantile(&sa, p) - quantile(&sb, p)).abs()
        })
        .sum();
    Ok(total / m as f64)
}

/// One `metric,band,dim,lag,value` row.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub band: String,
    pub dim: Option<usize>,
    pub lag: Option<usize>,
    pub value: f64,
}

/// Flat table of diagnostic values; serialized as CSV with `%.17g`
/// numbers so a write/read cycle is lossless.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsReport {
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: &str = "metric,band,dim,lag,value";

impl DiagnosticsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, metric: &str, band: &str, dim: Option<usize>, lag: Option<usize>, value: f64) {
        self.rows.push(ReportRow {
            metric: metric.to_string(),
            band: band.to_string(),
            dim,
            lag,
            value,
        });
    }

    pub fn add_psnr(&mut self, label: &str, value: f64) {
        self.push("psnr", label, None, None, value);
    }

    pub fn add_acf(&mut self, curve: &AcfCurve) {
        for (l, &v) in curve.values.iter().enumerate() {
            self.push("acf", &curve.band, Some(curve.index), Some(l), v);
        }
    }

    /// Curves plus `acf_min`/`acf_median`/`acf_max` envelopes and the
    /// count of degenerate coordinates.
    pub fn add_band(&mut self, band: &BandAcf) {
        for c in &band.curves {
            self.add_acf(c);
        }
        for (name, env) in [
            ("acf_min", &band.min),
            ("acf_median", &band.median),
            ("acf_max", &band.max),
        ] {
            for (l, &v) in env.iter().enumerate() {
                self.push(name, &band.band, None, Some(l), v);
            }
        }
        self.push("acf_degenerate", &band.band, None, None, band.degenerate as f64);
    }

    pub fn add_w1(&mut self, dim: usize, value: f64) {
        self.push("w1", "", Some(dim), None, value);
    }

    /// A named check: its pass flag (1 or 0) and measured quantities.
    pub fn add_check(&mut self, name: &str, passed: bool, measured: &[(&str, f64)]) {
        self.push(
            &format!("check.{name}"),
            "passed",
            None,
            None,
            if passed { 1.0 } else { 0.0 },
        );
        for (q, v) in measured {
            self.push(&format!("check.{name}"), q, None, None, *v);
        }
    }

    pub fn checks_passed(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.metric.starts_with("check.") && r.band == "passed")
            .all(|r| r.value == 1.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.metric,
                r.band,
                opt(r.dim),
                opt(r.lag),
                g17(r.value)
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Format {
            format: "report CSV",
            offset: line as u64,
            message: msg,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == REPORT_HEADER => {}
            other => return Err(bad(1, format!("expected header {REPORT_HEADER:?}, got {other:?}"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 2, format!("expected 5 fields, got {}", f.len())));
            }
            let opt = |s: &str| -> Result<Option<usize>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|e| bad(i + 2, format!("{s:?}: {e}")))
                }
            };
            rows.push(ReportRow {
                metric: f[0].to_string(),
                band: f[1].to_string(),
                dim: opt(f[2])?,
                lag: opt(f[3])?,
                value: f[4].parse().map_err(|e| bad(i + 2, format!("{:?}: {e}", f[4])))?,
            });
        }
        Ok(DiagnosticsReport { rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_values() {
        let r = Tensor::zeros(&[4]);
        assert_eq!(psnr(&r, &r, 1.0).unwrap(), PSNR_CAP);
        let x = Tensor::filled(&[4], 0.1);
        assert!((psnr(&x, &r, 1.0).unwrap() - 20.0).abs() < 1e-12);
        assert!(psnr(&Tensor::zeros(&[3]), &r, 1.0).is_err());
    }

    #[test]
    fn w1_point_masses_and_symmetry() {
        assert_eq!(wasserstein1_1d(&[0.0; 5], &[2.5; 7]).unwrap(), 2.5);
        let a = [0.3, -1.0, 2.0, 0.5];
        let b = [1.0, 0.0, 4.0];
        assert_eq!(wasserstein1_1d(&a, &b).unwrap(), wasserstein1_1d(&b, &a).unwrap());
        assert_eq!(wasserstein1_1d(&a, &a).unwrap(), 0.0);
        assert!(wasserstein1_1d(&[], &a).is_err());
    }

    #[test]
    fn w1_aligned_is_sorted_l1() {
        // Equal lengths: pair order statistics directly.
        let a = [3.0, 1.0, 2.0];
        let b = [0.0, 5.0, 1.0];
        let want = ((1.0f64 - 0.0).abs() + (2.0f64 - 1.0).abs() + (3.0f64 - 5.0).abs()) / 3.0;
        assert!((wasserstein1_1d(&a, &b).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn report_round_trip() {
        let mut r = DiagnosticsReport::new();
        r.add_psnr("mean", 27.123456789012345);
        r.add_acf(&AcfCurve {
            band: "YH".into(),
            index: 7,
            values: vec![1.0, 0.1 + 0.2, -1e-300],
        });
        r.add_w1(0, std::f64::consts::E);
        r.add_check("moments", true, &[("k4", 12.5)]);
        let back = DiagnosticsReport::from_csv(&r.to_csv()).unwrap();
        assert_eq!(back, r);
        assert!(back.checks_passed());
        assert!(DiagnosticsReport::from_csv("nope\n").is_err());
    }
}
