use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One orthonormal Haar level on an `h x w` row-major image. Returns the
/// low-pass band and the three detail bands (horizontal, vertical,
/// diagonal) stacked as `[3, h/2, w/2]`.
fn level(x: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let (h2, w2) = (h / 2, w / 2);
    let n = h2 * w2;
    let mut ll = vec![0.0; n];
    let mut d = vec![0.0; 3 * n];
    for i in 0..h2 {
        for j in 0..w2 {
            let a = x[2 * i * w + 2 * j];
            let b = x[2 * i * w + 2 * j + 1];
            let c = x[(2 * i + 1) * w + 2 * j];
            let e = x[(2 * i + 1) * w + 2 * j + 1];
            let k = i * w2 + j;
            ll[k] = 0.5 * (a + b + c + e);
            d[k] = 0.5 * (a + b - c - e);
            d[n + k] = 0.5 * (a - b + c - e);
            d[2 * n + k] = 0.5 * (a - b - c + e);
        }
    }
    (ll, d)
}

fn inverse_level(ll: &[f64], d: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (h / 2, w / 2);
    let n = h2 * w2;
    let mut x = vec![0.0; h * w];
    for i in 0..h2 {
        for j in 0..w2 {
            let k = i * w2 + j;
            let (s, dh, dv, dd) = (ll[k], d[k], d[n + k], d[2 * n + k]);
            x[2 * i * w + 2 * j] = 0.5 * (s + dh + dv + dd);
            x[2 * i * w + 2 * j + 1] = 0.5 * (s + dh - dv - dd);
            x[(2 * i + 1) * w + 2 * j] = 0.5 * (s - dh + dv - dd);
            x[(2 * i + 1) * w + 2 * j + 1] = 0.5 * (s - dh - dv + dd);
        }
    }
    x
}

fn check_divisible(h: usize, w: usize, levels: usize) -> Result<()> {
    let f = 1usize.checked_shl(levels as u32).unwrap_or(0);
    if levels == 0 || f == 0 || !h.is_multiple_of(f) || !w.is_multiple_of(f) || h < f || w < f {
        return Err(Error::BadShape {
            shape: vec![h, w],
            reason: format!("sides must be divisible by 2^{levels} (levels >= 1)"),
        });
    }
    Ok(())
}

/// Slice-level transform: `(YL, [YH_1, ..., YH_levels])` with the finest
/// detail band first.
pub(crate) fn haar_dwt2(x: &[f64], h: usize, w: usize, levels: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_divisible(h, w, levels)?;
    let mut cur = x.to_vec();
    let (mut ch, mut cw) = (h, w);
    let mut yh = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (ll, d) = level(&cur, ch, cw);
        yh.push(d);
        cur = ll;
        ch /= 2;
        cw /= 2;
    }
    Ok((cur, yh))
}

/// Orthonormal 2D Haar transform of an `[h, w]` image.
pub fn dwt2(image: &Tensor, levels: usize) -> Result<(Tensor, Vec<Tensor>)> {
    let (h, w) = match image.shape() {
        [h, w] => (*h, *w),
        s => {
            return Err(Error::BadShape {
                shape: s.to_vec(),
                reason: "expected a 2D image".into(),
            })
        }
    };
    let (yl, yh) = haar_dwt2(image.data(), h, w, levels)?;
    let mut bands = Vec::with_capacity(levels);
    for (l, d) in yh.into_iter().enumerate() {
        bands.push(Tensor::from_raw(vec![3, h >> (l + 1), w >> (l + 1)], d)?);
    }
    Ok((Tensor::from_raw(vec![h >> levels, w >> levels], yl)?, bands))
}

/// Inverse of [`dwt2`].
pub fn idwt2(yl: &Tensor, yh: &[Tensor]) -> Result<Tensor> {
    let mut cur = yl.data().to_vec();
    let (mut h, mut w) = match yl.shape() {
        [h, w] => (*h, *w),
        s => {
            return Err(Error::BadShape {
                shape: s.to_vec(),
                reason: "low-pass band must be 2D".into(),
            })
        }
    };
    for d in yh.iter().rev() {
        if d.shape() != [3, h, w] {
            return Err(Error::ShapeMismatch {
                expected: vec![3, h, w],
                got: d.shape().to_vec(),
            });
        }
        cur = inverse_level(&cur, d.data(), 2 * h, 2 * w);
        h *= 2;
        w *= 2;
    }
    Tensor::from_raw(vec![h, w], cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn impulse_by_hand() {
        // Impulse at (1, 2) of a 4x4 image sits in block (0, 1) as its
        // bottom-left entry `c`.
        let mut x = vec![0.0; 16];
        x[4 + 2] = 1.0;
        let (yl, yh) = dwt2(&Tensor::new(vec![4, 4], x).unwrap(), 1).unwrap();
        assert_eq!(yl.data(), &[0.0, 0.5, 0.0, 0.0]);
        assert_eq!(
            yh[0].data(),
            &[0.0, -0.5, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0]
        );
    }

    #[test]
    fn constant_image_has_no_detail() {
        let (yl, yh) = dwt2(&Tensor::filled(&[8, 8], 0.3), 3).unwrap();
        assert!(yh.iter().all(|b| b.data().iter().all(|&v| v == 0.0)));
        assert!((yl.data()[0] - 0.3 * 8.0).abs() < 1e-14);
    }

    #[test]
    fn parseval_and_inverse() {
        let mut rng = Rng::new(4, 0);
        let x = Tensor::new(vec![16, 8], (0..128).map(|_| rng.gaussian()).collect()).unwrap();
        let (yl, yh) = dwt2(&x, 3).unwrap();
        let energy = yl.norm().powi(2) + yh.iter().map(|b| b.norm().powi(2)).sum::<f64>();
        assert!((energy - x.norm().powi(2)).abs() < 1e-10);
        let back = idwt2(&yl, &yh).unwrap();
        assert!(back.data().iter().zip(x.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn bad_shapes() {
        assert!(dwt2(&Tensor::zeros(&[6, 8]), 2).is_err());
        assert!(dwt2(&Tensor::zeros(&[8, 8]), 0).is_err());
        assert!(dwt2(&Tensor::zeros(&[8]), 1).is_err());
    }
}
