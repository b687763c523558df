//! Gauss-Legendre quadrature on graded panels. Test-only oracle for the
//! closed-form likelihood and hypergeometric code.

/// Nodes and weights of the `n`-point rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn panel(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, rule: &[(f64, f64)]) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Integral over `[lo, hi]` with panels refined geometrically towards both
/// endpoints, which handles integrable endpoint singularities and sharp
/// boundary layers.
pub fn integrate(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let rule = gauss_legendre(20);
    let mid = 0.5 * (lo + hi);
    let mut total = 0.0;
    let levels = 60;
    // left half: [lo, mid] split at lo + (mid-lo) 2^-k
    let mut edges = vec![mid];
    for k in 1..levels {
        edges.push(lo + (mid - lo) * 0.5f64.powi(k));
    }
    edges.push(lo);
    for w in edges.windows(2) {
        total += panel(f, w[1], w[0], &rule);
    }
    let mut edges = vec![mid];
    for k in 1..levels {
        edges.push(hi - (hi - mid) * 0.5f64.powi(k));
    }
    edges.push(hi);
    for w in edges.windows(2) {
        total += panel(f, w[0], w[1], &rule);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_and_singularities() {
        let v = integrate(&|x| x.powi(5), 0.0, 2.0);
        assert!((v - 64.0 / 6.0).abs() < 1e-12);
        let v = integrate(&|x| 1.0 / x.sqrt(), 0.0, 1.0);
        assert!((v - 2.0).abs() < 1e-9, "{v}");
        let v = integrate(&|x| (-x).exp(), 0.0, 30.0);
        assert!((v - (1.0 - (-30f64).exp())).abs() < 1e-12);
    }
}
