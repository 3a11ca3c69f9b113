/// Composite Simpson rule over `[lo, hi]` with `n` subintervals (rounded up
/// to the next even count).
pub fn quadrature_integrate_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    assert!(lo < hi, "quadrature needs lo < hi");
    let n = (n.max(2) + 1) & !1;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_integrates_exactly() {
        assert_eq!(quadrature_integrate_1d(|_| 1.0, 0.0, 1.0, 2), 1.0);
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = quadrature_integrate_1d(|x| x * x, 0.0, 1.0, 101);
        assert!((v - 1.0 / 3.0).abs() <= 1e-10);
        let c = quadrature_integrate_1d(|x| x * x * x - x, -1.0, 2.0, 4);
        assert!((c - 2.25).abs() <= 1e-12);
    }

    #[test]
    fn odd_counts_round_up() {
        let a = quadrature_integrate_1d(|x| x.sin(), 0.0, 1.0, 9);
        let b = quadrature_integrate_1d(|x| x.sin(), 0.0, 1.0, 10);
        assert_eq!(a, b);
    }
}
