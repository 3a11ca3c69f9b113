//! Small dense linear algebra: inner products, Cholesky factorization and
//! power iteration for operator norms.

use super::Rng;
use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

const POWER_SEED: u64 = 0x005e_ed0f_5eed;

/// Largest singular value of the linear map `apply` (with adjoint
/// `apply_t`) acting on `R^d`, by power iteration on `AᵀA`.
///
/// The running estimate `‖A v_k‖` is nondecreasing. Returns
/// [`Error::NonConvergence`] if the relative change is still above `tol`
/// after `iters` iterations.
pub fn power_iteration_spectral_norm<F, G>(
    mut apply: F,
    mut apply_t: G,
    d: usize,
    iters: usize,
    tol: f64,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    if d == 0 || iters == 0 {
        return Err(Error::invalid("power iteration needs d >= 1 and iters >= 1"));
    }
    let mut rng = Rng::new(POWER_SEED, d as u64);
    let mut v = vec![0.0; d];
    rng.fill_gaussian(&mut v);
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut sigma = 0.0f64;
    let mut rel_change = f64::INFINITY;
    for _ in 0..iters {
        let w = apply(&v);
        let s = norm(&w);
        if !s.is_finite() {
            return Err(Error::non_finite("power iteration"));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        rel_change = (s - sigma).abs() / s;
        sigma = sigma.max(s);
        if rel_change <= tol {
            return Ok(sigma);
        }
        let mut u = apply_t(&w);
        let nu = norm(&u);
        if nu == 0.0 {
            return Ok(sigma);
        }
        u.iter_mut().for_each(|x| *x /= nu);
        v = u;
    }
    Err(Error::NonConvergence { iters, rel_change })
}

/// Lower-triangular Cholesky factor of a symmetric positive definite
/// row-major `n x n` matrix.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// `log det A` from the Cholesky factor of `A`.
pub fn cholesky_logdet(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| 2.0 * l[i * n + i].ln()).sum()
}

pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows).map(|r| dot(&a[r * cols..(r + 1) * cols], x)).collect()
}

/// Smallest eigenvalue of a symmetric positive semidefinite matrix by
/// inverse power iteration. Returns 0 when the matrix is singular to
/// working precision.
pub fn smallest_eigenvalue_spd(a: &[f64], n: usize, iters: usize, tol: f64) -> Result<f64> {
    let l = match cholesky(a, n) {
        Ok(l) => l,
        Err(Error::NotPositiveDefinite) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let mut rng = Rng::new(POWER_SEED, n as u64 + 1);
    let mut v = vec![0.0; n];
    rng.fill_gaussian(&mut v);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut mu = 0.0f64;
    let mut rel_change = f64::INFINITY;
    for _ in 0..iters {
        let w = cholesky_solve(&l, n, &v);
        let nw = norm(&w);
        let est = 1.0 / nw;
        rel_change = (est - mu).abs() / est;
        mu = est;
        v = w.iter().map(|x| x / nw).collect();
        if rel_change <= tol {
            return Ok(mu);
        }
    }
    Err(Error::NonConvergence { iters, rel_change })
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi
/// rotations.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::invalid(format!("matrix must be {n}x{n}")));
    }
    let mut m = a.to_vec();
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s
    };
    let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut sweeps = 0;
    while off(&m) > 1e-30 * scale {
        sweeps += 1;
        if sweeps > 100 {
            return Err(Error::NonConvergence {
                iters: sweeps,
                rel_change: (off(&m) / scale).sqrt(),
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_eigenvalues() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let ev = symmetric_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let ev = symmetric_eigenvalues(&a, 3).unwrap();
        assert!((ev.iter().sum::<f64>() - 12.0).abs() < 1e-12);
        let lmin = smallest_eigenvalue_spd(&a, 3, 10_000, 1e-14).unwrap();
        assert!((ev[0] - lmin).abs() < 1e-10);
        assert_eq!(symmetric_eigenvalues(&[0.0; 4], 2).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_norm_is_one() {
        let s = power_iteration_spectral_norm(|x| x.to_vec(), |x| x.to_vec(), 5, 100, 1e-14).unwrap();
        assert!((s - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn diagonal_norm_is_largest_entry() {
        let diag = [1.0, 2.0, 3.0];
        let f = |x: &[f64]| x.iter().zip(diag).map(|(a, b)| a * b).collect::<Vec<_>>();
        let s = power_iteration_spectral_norm(f, f, 3, 10_000, 1e-15).unwrap();
        assert!((s - 3.0).abs() <= 1e-8, "{s}");
    }

    #[test]
    fn zero_map_has_zero_norm() {
        let s = power_iteration_spectral_norm(|x| vec![0.0; x.len()], |x| vec![0.0; x.len()], 4, 10, 1e-12).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        let diag = [1.0, 0.999_999, 0.5];
        let f = |x: &[f64]| x.iter().zip(diag).map(|(a, b)| a * b).collect::<Vec<_>>();
        let r = power_iteration_spectral_norm(f, f, 3, 1, 0.0);
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = cholesky_solve(&l, 3, &b);
        let ax = matvec(&a, 3, 3, &x);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-12);
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn smallest_eigenvalue_of_diagonal() {
        let a = [3.0, 0.0, 0.0, 0.0, 0.25, 0.0, 0.0, 0.0, 7.0];
        let m = smallest_eigenvalue_spd(&a, 3, 1000, 1e-14).unwrap();
        assert!((m - 0.25).abs() < 1e-10);
        let singular = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(smallest_eigenvalue_spd(&singular, 2, 100, 1e-12).unwrap(), 0.0);
    }
}
