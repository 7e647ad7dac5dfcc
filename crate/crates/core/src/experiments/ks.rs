//! Kolmogorov–Smirnov distances and the asymptotic null law.

use statrs::function::erf::erfc;

/// Φ(x / σ) for σ > 0.
pub fn normal_cdf(x: f64, sigma: f64) -> f64 {
    0.5 * erfc(-x / (sigma * std::f64::consts::SQRT_2))
}

/// sup_x |F_n(x) − F(x)| for a continuous F.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    })
}

/// Distance to N(0, σ²). For σ = 0 the target is the point mass at 0 and
/// the distance is the larger of the fractions strictly below and above 0.
pub fn ks_normal(sample: &[f64], sigma: f64) -> f64 {
    if sigma == 0.0 {
        if sample.is_empty() {
            return 0.0;
        }
        let n = sample.len() as f64;
        let below = sample.iter().filter(|&&x| x < 0.0).count() as f64;
        let above = sample.iter().filter(|&&x| x > 0.0).count() as f64;
        return (below / n).max(above / n);
    }
    ks_one_sample(sample, |x| normal_cdf(x, sigma)).clamp(0.0, 1.0)
}

/// sup_x |F_a(x) − F_b(x)|, ties handled.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// P(K ≤ x) for the Kolmogorov distribution.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        // Jacobi form, fast for small x
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        return (2.0 * std::f64::consts::PI).sqrt() / x * s;
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * x * x).exp()
        })
        .sum();
    1.0 - 2.0 * s
}

/// Inverse of [`kolmogorov_cdf`] by bisection.
pub fn kolmogorov_quantile(p: f64) -> f64 {
    assert!((0.0..1.0).contains(&p), "probability must lie in [0, 1)");
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The p-quantile of the one-sample KS distance for n draws, asymptotically.
pub fn ks_null_quantile(n: usize, p: f64) -> f64 {
    kolmogorov_quantile(p) / (n as f64).sqrt()
}

/// Scale √((n+m)/(nm)) of the two-sample statistic under the null.
pub fn ks_scale(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ((n + m) / (n * m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_quantiles() {
        assert!((kolmogorov_quantile(0.99) - 1.627_6).abs() < 1e-4);
        assert!((kolmogorov_quantile(0.95) - 1.358_1).abs() < 1e-4);
        // both series agree at the switch point
        let jac = {
            let x: f64 = 1.0;
            let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
            let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
            (2.0 * std::f64::consts::PI).sqrt() / x * s
        };
        assert!((jac - kolmogorov_cdf(1.0)).abs() < 1e-14);
    }

    #[test]
    fn distances() {
        assert_eq!(ks_normal(&[0.0; 5], 0.0), 0.0);
        assert_eq!(ks_normal(&[0.0, 1.0], 0.0), 0.5);
        assert!((ks_normal(&[0.0], 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert_eq!(ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]), 1.0 / 3.0);
    }
}
