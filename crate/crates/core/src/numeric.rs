//! Small numerical kernels shared by the series code: compensated summation
//! and a handful of fixed quadrature rules.

use num_complex::Complex64;

/// Neumaier's variant of Kahan summation.
///
/// The running error term is folded back in by [`CompensatedSum::value`];
/// the result does not depend on how the input is chunked, up to the last
/// couple of ulps.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self {
            sum: 0.0,
            compensation: 0.0,
        }
    }

    pub fn starting_at(value: f64) -> Self {
        Self {
            sum: value,
            compensation: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}

/// Compensated complex accumulator (independent real and imaginary parts).
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedComplex {
    re: CompensatedSum,
    im: CompensatedSum,
}

impl CompensatedComplex {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Harmonic number H_n, summed exactly for small n and by the asymptotic
/// expansion (error below 1e-20 relative) otherwise.
pub fn harmonic(n: u64) -> f64 {
    if n < 64 {
        let mut s = CompensatedSum::new();
        for k in (1..=n).rev() {
            s.add(1.0 / k as f64);
        }
        return s.value();
    }
    harmonic_real(n as f64)
}

/// Smooth extension of H_n to real x >= 64 via ln x + γ + 1/(2x) - 1/(12x²) + 1/(120x⁴).
pub fn harmonic_real(x: f64) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x.ln() + EULER_GAMMA + 0.5 * inv - inv2 / 12.0 + inv2 * inv2 / 120.0
}

/// Nodes and weights of an n-point Gauss rule.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Gauss–Legendre on [-1, 1] by Newton iteration on P_n.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Gauss–Laguerre for ∫_0^∞ f(v) e^{-v} dv.
    pub fn laguerre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..n {
            // Standard initial guesses followed by Newton refinement.
            z = if i == 0 {
                3.0 / (1.0 + 2.4 * nf)
            } else if i == 1 {
                z + 15.0 / (1.0 + 2.5 * nf)
            } else {
                let ai = (i - 1) as f64;
                z + ((1.0 + 2.55 * ai) / (1.9 * ai)) * (z - nodes[i - 2])
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let (p, d) = laguerre_with_derivative(n, z);
                pp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = laguerre_with_derivative(n, z);
            if d.is_finite() && d != 0.0 {
                pp = d;
            }
            nodes[i] = z;
            weights[i] = 1.0 / (z * pp * pp);
        }
        Self { nodes, weights }
    }

    /// Integrate `f` over [a, b] with this (Legendre) rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = CompensatedSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s.add(w * f(mid + half * x));
        }
        half * s.value()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn laguerre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = 1.0 - x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0 - x) * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (p1 - p0) / x;
    (p1, d)
}

/// Result of an adaptive quadrature: value and an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: f64,
}

/// Tanh–sinh quadrature on (0, 1) for integrands that may have integrable
/// endpoint singularities. Refines the step until successive levels agree to
/// `rel_tol` (or the level cap is hit) and reports the last difference as the
/// error estimate.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, rel_tol: f64) -> Quadrature<f64> {
    let r = tanh_sinh_generic(|x| Complex64::new(f(x), 0.0), rel_tol);
    Quadrature {
        value: r.value.re,
        error: r.error,
    }
}

/// Complex-valued version of [`tanh_sinh`].
pub fn tanh_sinh_complex<F: FnMut(f64) -> Complex64>(f: F, rel_tol: f64) -> Quadrature<Complex64> {
    tanh_sinh_generic(f, rel_tol)
}

fn tanh_sinh_generic<F: FnMut(f64) -> Complex64>(mut f: F, rel_tol: f64) -> Quadrature<Complex64> {
    use std::f64::consts::FRAC_PI_2;
    // x = (1 + tanh(π/2 sinh s)) / 2 maps (-∞, ∞) onto (0, 1).
    const S_MAX: f64 = 4.5;
    const MAX_LEVEL: u32 = 10;

    let mut eval = |s: f64| -> Complex64 {
        let u = FRAC_PI_2 * s.sinh();
        let cosh_u = u.cosh();
        // 1 - x and x, computed without cancellation near the endpoints.
        let e = (-2.0 * u.abs()).exp();
        let small = e / (1.0 + e);
        let (x, one_minus_x) = if u >= 0.0 {
            (1.0 - small, small)
        } else {
            (small, 1.0 - small)
        };
        if x <= 0.0 || one_minus_x <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let w = 0.5 * FRAC_PI_2 * s.cosh() / (cosh_u * cosh_u);
        if w == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        f(x) * w
    };

    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    loop {
        let s = k as f64 * h;
        if s > S_MAX {
            break;
        }
        sum += eval(s) + eval(-s);
        k += 1;
    }
    let mut estimate = sum * h;
    let mut error = f64::INFINITY;
    for _ in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        loop {
            let s = k as f64 * h;
            if s > S_MAX {
                break;
            }
            sum += eval(s) + eval(-s);
            k += 2;
        }
        let next = sum * h;
        error = (next - estimate).norm();
        estimate = next;
        if error <= rel_tol * estimate.norm() {
            break;
        }
    }
    Quadrature { value: estimate, error }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        s.add(1e100);
        s.add(1.0);
        s.add(-1e100);
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn harmonic_expansion_matches_exact_sum() {
        let exact: f64 = (1..=1000u64).rev().map(|k| 1.0 / k as f64).sum();
        assert!((harmonic(1000) - exact).abs() < 1e-13);
        assert_eq!(harmonic(1), 1.0);
        assert!((harmonic(3) - 11.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let rule = GaussRule::legendre(10);
        let v = rule.integrate(0.0, 2.0, |x| x.powi(19));
        assert!((v - 2f64.powi(20) / 20.0).abs() < 1e-9 * v);
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn laguerre_rule_moments() {
        let rule = GaussRule::laguerre(40);
        // ∫ v^k e^{-v} = k!
        let mut fact = 1.0;
        for k in 0..20 {
            if k > 0 {
                fact *= k as f64;
            }
            let m: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(k)).sum();
            assert!((m - fact).abs() < 1e-10 * fact, "moment {k}: {m} vs {fact}");
        }
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularities() {
        let r = tanh_sinh(|x| -x.ln(), 1e-13);
        assert!((r.value - 1.0).abs() < 1e-12);
        let r = tanh_sinh(|x| 1.0 / x.sqrt(), 1e-12);
        assert!((r.value - 2.0).abs() < 1e-10);
    }
}
