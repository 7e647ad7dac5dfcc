//! b(t) = Σ β_k e^{ikt} and a(t) = 1/(1 − b(t)) on the unit circle.
//!
//! Near t = 0 the series for b′ and b″ converge slowly (or only
//! conditionally), so each sum is split at K = max(N₀, ⌈40/|t|⌉). The head
//! is summed directly. The tail Σ_{n>K} F(n) e^{int} of a smooth F is
//! replaced by its midpoint Euler–Maclaurin form
//!
//! ```text
//! ∫_{K+1/2}^∞ F(x) e^{ixt} dx + φ′(K + 1/2)/24,    φ(x) = F(x) e^{ixt},
//! ```
//!
//! and the integral is taken along the ray x = K + 1/2 + i·sign(t)·v/|t|,
//! where the oscillation turns into e^{−v} and Gauss–Laguerre applies.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::kernel::SeriesKernel;
use super::{kernel_for, DEFAULT_TERM_BUDGET};
use crate::numeric::{CompensatedComplex, CompensatedSum, GaussRule};
use crate::{Error, Result, SlowlyVaryingSpec};

const HEAD_FLOOR: u64 = 1 << 16;
const OSCILLATIONS: f64 = 40.0;
pub const DEFAULT_T_MIN: f64 = 1e-6;

/// Values (and derivatives for t ≠ 0) of b or a at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierEval {
    pub t: f64,
    pub value: Complex64,
    pub first_derivative: Option<Complex64>,
    pub second_derivative: Option<Complex64>,
    pub truncation_error_bound: f64,
}

/// f(t) = e^{it}/(1 − e^{it}) and f′(t).
pub fn fourier_factor_f(t: f64) -> (Complex64, Complex64) {
    let w = Complex64::from_polar(1.0, t);
    let d = Complex64::new(1.0, 0.0) - w;
    (w / d, Complex64::i() * w / (d * d))
}

/// g(t) = ic Σ_n (1 − e^{int}) u_n and g′(t) = c Σ_n n u_n e^{int}, with
/// u_n = 1/√(n³ℓ(n)).
pub fn fourier_factor_g(evaluator: &FourierEvaluator, t: f64) -> Result<(Complex64, Complex64)> {
    let sums = evaluator.sums(t)?;
    Ok((sums.g, sums.g_prime))
}

/// G(it) and G′(it) for G(x) = 1/x − 1/(2 sinh(x/2)), the generating
/// function of the midpoint Euler–Maclaurin coefficients.
fn euler_maclaurin_weights(t: f64) -> (Complex64, Complex64) {
    if t.abs() < 0.05 {
        let t2 = t * t;
        let g0 = t * (1.0 / 24.0 + t2 * (7.0 / 5760.0 + t2 * 31.0 / 967_680.0));
        let g1 = 1.0 / 24.0 + t2 * (21.0 / 5760.0 + t2 * 155.0 / 967_680.0);
        return (Complex64::new(0.0, g0), Complex64::new(g1, 0.0));
    }
    let (s, c) = (0.5 * t).sin_cos();
    let g0 = ((0.5 * t) / s - 1.0) / t;
    let g1 = 1.0 / (t * t) - c / (4.0 * s * s);
    (Complex64::new(0.0, g0), Complex64::new(g1, 0.0))
}

/// Evaluates b and a for one ℓ; building it fixes c and the series kernel.
#[derive(Debug, Clone)]
pub struct FourierEvaluator {
    kernel: SeriesKernel,
    c: f64,
    pub t_min: f64,
    pub term_budget: u64,
}

struct Sums {
    b: Complex64,
    g: Complex64,
    g_prime: Complex64,
    err_b: f64,
    err_g: f64,
    err_g_prime: f64,
}

impl FourierEvaluator {
    pub fn new(ell: SlowlyVaryingSpec, tolerance: f64) -> Result<Self> {
        let kernel = kernel_for(ell, tolerance, 0)?;
        let c = 1.0 / kernel.harmonic_series.value;
        Ok(Self {
            kernel,
            c,
            t_min: DEFAULT_T_MIN,
            term_budget: DEFAULT_TERM_BUDGET,
        })
    }

    pub fn ell(&self) -> SlowlyVaryingSpec {
        self.kernel.ell
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    fn head_length(&self, t: f64) -> Result<u64> {
        let k = HEAD_FLOOR.max((OSCILLATIONS / t.abs()).ceil() as u64);
        if k > self.term_budget {
            return Err(Error::Budget(format!(
                "t = {t:e} needs {k} terms, budget is {}",
                self.term_budget
            )));
        }
        Ok(k)
    }

    fn check_t(&self, t: f64, order: u8) -> Result<()> {
        if !t.is_finite() || t.abs() > std::f64::consts::PI {
            return Err(Error::Domain(format!("t = {t} outside [−π, π]")));
        }
        if order > 2 {
            return Err(Error::InvalidInput(format!("order must be 0, 1 or 2, got {order}")));
        }
        if t == 0.0 && order > 0 {
            return Err(Error::Domain("derivatives are not defined at t = 0".into()));
        }
        if t != 0.0 && t.abs() < self.t_min {
            return Err(Error::Domain(format!(
                "|t| = {:e} is below t_min = {:e}",
                t.abs(),
                self.t_min
            )));
        }
        Ok(())
    }

    fn sums(&self, t: f64) -> Result<Sums> {
        self.check_t(t, 0)?;
        self.sums_with_head(t, self.head_length(t)?)
    }

    fn sums_with_head(&self, t: f64, k: u64) -> Result<Sums> {
        let c = self.c;
        let kernel = &self.kernel;

        // Head: T_n by backward accumulation from a certified T_{K+1}.
        let t_next = kernel.tail_sum_certified(k + 1);
        let mut tn = CompensatedSum::starting_at(t_next.value);
        let mut sb = CompensatedComplex::new();
        let mut su = CompensatedComplex::new();
        let mut snu = CompensatedComplex::new();
        for n in (1..=k).rev() {
            let nf = n as f64;
            let u = kernel.u(nf);
            tn.add(u);
            let (s, co) = (nf * t).sin_cos();
            let e = Complex64::new(co, s);
            sb.add(e * (tn.value() / nf));
            su.add(e * u);
            snu.add(e * (nf * u));
        }

        let a = k as f64 + 0.5;
        // β_n = c T_n / n with T_n interpolated by the kernel's tail model,
        // whose derivative is −u + u′/2 up to a u″ term.
        let tail_b = self.oscillatory_tail(
            t,
            a,
            |z| kernel.tail_model(z) / z,
            |x| {
                let xr = Complex64::new(x, 0.0);
                let dt = -kernel.u_complex(xr) + 0.5 * kernel.u_prime_complex(xr);
                dt / xr - kernel.tail_model(xr) / (xr * xr)
            },
        );
        let tail_u = self.oscillatory_tail(
            t,
            a,
            |z| kernel.u_complex(z),
            |x| kernel.u_prime_complex(Complex64::new(x, 0.0)),
        );
        let tail_nu = self.oscillatory_tail(
            t,
            a,
            |z| z * kernel.u_complex(z),
            |x| {
                let xr = Complex64::new(x, 0.0);
                kernel.u_complex(xr) + xr * kernel.u_prime_complex(xr)
            },
        );

        let total = kernel.total();
        let harmonic_k = crate::numeric::harmonic(k);
        Ok(Sums {
            b: c * (sb.value() + tail_b.0),
            g: Complex64::i() * c * (total - (su.value() + tail_u.0)),
            g_prime: c * (snu.value() + tail_nu.0),
            err_b: c * (tail_b.1 + t_next.radius * harmonic_k + 16.0 * f64::EPSILON * harmonic_k),
            err_g: c * (tail_u.1 + kernel.harmonic_series.radius + 16.0 * f64::EPSILON * total),
            err_g_prime: c * (tail_nu.1 + 16.0 * f64::EPSILON * (k as f64).sqrt()),
        })
    }

    /// Σ_{n≥a+1/2} F(n) e^{int} for F analytic to the right of a, returned
    /// with an error estimate. `f_prime` is F′ on the real axis.
    fn oscillatory_tail<F, D>(&self, t: f64, a: f64, f: F, f_prime: D) -> (Complex64, f64)
    where
        F: Fn(Complex64) -> Complex64,
        D: Fn(f64) -> Complex64,
    {
        let tau = t.abs();
        let sigma = t.signum();
        let rotate = |rule: &GaussRule| -> Complex64 {
            let mut s = CompensatedComplex::new();
            for (v, w) in rule.nodes.iter().zip(&rule.weights) {
                s.add(*w * f(Complex64::new(a, sigma * v / tau)));
            }
            s.value()
        };
        let phase = Complex64::from_polar(1.0, a * t);
        let pre = Complex64::new(0.0, sigma / tau) * phase;
        let coarse = pre * rotate(&GaussRule::laguerre(32));
        let fine = pre * rotate(&GaussRule::laguerre(48));

        // Midpoint Euler–Maclaurin corrections, summed over all orders for
        // the oscillating factor: Σ_k c_k φ^{(2k−1)}(a) with φ = F e^{ixt}
        // gives e^{iat}(F(a) G(it) + F′(a) G′(it) + …).
        let (g0, g1) = euler_maclaurin_weights(t);
        let fa = f(Complex64::new(a, 0.0));
        let value = fine + phase * (fa * g0 + f_prime(a) * g1);
        // F″ is smaller than F by (3/a)².
        let remainder = 2.0 * (3.0 / a).powi(2) * fa.norm();
        (value, (fine - coarse).norm() + remainder)
    }

    /// b(t) and, for order ≥ 1, b′(t) = f g and b″(t) = f′g + f g′.
    pub fn b(&self, t: f64, order: u8) -> Result<FourierEval> {
        self.check_t(t, order)?;
        if t == 0.0 {
            let h = self.kernel.harmonic_series;
            return Ok(FourierEval {
                t,
                value: Complex64::new(self.c * h.value, 0.0),
                first_derivative: None,
                second_derivative: None,
                truncation_error_bound: self.c * h.radius,
            });
        }
        let s = self.sums(t)?;
        let (f, fp) = fourier_factor_f(t);
        let first = (order >= 1).then(|| f * s.g);
        let second = (order >= 2).then(|| fp * s.g + f * s.g_prime);
        let mut err = s.err_b;
        if order >= 1 {
            err = err.max(f.norm() * s.err_g);
        }
        if order >= 2 {
            err = err.max(fp.norm() * s.err_g + f.norm() * s.err_g_prime);
        }
        Ok(FourierEval {
            t,
            value: s.b,
            first_derivative: first,
            second_derivative: second,
            truncation_error_bound: err,
        })
    }

    /// a = 1/(1 − b), a′ = b′/(1 − b)², a″ = b″/(1 − b)² + 2b′²/(1 − b)³.
    pub fn a(&self, t: f64, order: u8) -> Result<FourierEval> {
        if t == 0.0 {
            return Err(Error::Domain("a is singular at t = 0".into()));
        }
        let b = self.b(t, order)?;
        let one = Complex64::new(1.0, 0.0);
        let d = one - b.value;
        let bound = b.truncation_error_bound;
        if d.norm() < 10.0 * bound {
            return Err(Error::Certification(format!(
                "|1 − b({t:e})| = {:e} is within 10× its error bound {bound:e}",
                d.norm()
            )));
        }
        let first = b.first_derivative.map(|bp| bp / (d * d));
        let second = match (b.first_derivative, b.second_derivative) {
            (Some(bp), Some(bpp)) => Some(bpp / (d * d) + 2.0 * bp * bp / (d * d * d)),
            _ => None,
        };
        let dn = d.norm();
        let mut err = bound / (dn * dn);
        if let Some(bp) = b.first_derivative {
            err = err.max(bound / (dn * dn) + 2.0 * bp.norm() * bound / (dn * dn * dn));
        }
        Ok(FourierEval {
            t,
            value: one / d,
            first_derivative: first,
            second_derivative: second,
            truncation_error_bound: err,
        })
    }
}

/// One-shot b(t); builds a fresh evaluator.
pub fn b_eval(ell: SlowlyVaryingSpec, t: f64, order: u8, tolerance: f64) -> Result<FourierEval> {
    FourierEvaluator::new(ell, tolerance)?.b(t, order)
}

/// One-shot a(t); builds a fresh evaluator.
pub fn a_eval(ell: SlowlyVaryingSpec, t: f64, order: u8, tolerance: f64) -> Result<FourierEval> {
    FourierEvaluator::new(ell, tolerance)?.a(t, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_maclaurin_weights_are_exact_for_geometric_tails() {
        // Σ_{n≥K+1} e^{int} = e^{i(K+1/2)t} (i/t + G(it))
        for t in [1e-3, 0.04, 0.06, 1.0, -2.0, 3.1] {
            let (g0, _) = euler_maclaurin_weights(t);
            let w = Complex64::from_polar(1.0, t);
            let lhs = w.sqrt() / (Complex64::new(1.0, 0.0) - w);
            let rhs = Complex64::new(0.0, 1.0 / t) + g0;
            assert!((lhs - rhs).norm() < 1e-12 * lhs.norm(), "t = {t}");
        }
        // series and closed form agree across the switch
        let h = 1e-7;
        let (_, g1) = euler_maclaurin_weights(0.05);
        let num = (euler_maclaurin_weights(0.05 + h).0 - euler_maclaurin_weights(0.05 - h).0) / (2.0 * h);
        assert!((num.im - g1.re).abs() < 1e-7);
    }

    #[test]
    fn factor_f_derivative_matches_difference_quotient() {
        let t = 0.3;
        let h = 1e-6;
        let (_, fp) = fourier_factor_f(t);
        let num = (fourier_factor_f(t + h).0 - fourier_factor_f(t - h).0) / (2.0 * h);
        assert!((fp - num).norm() < 1e-6 * fp.norm());
    }

    #[test]
    fn tail_correction_matches_longer_direct_sum() {
        // Two head lengths must give the same b(t).
        for ell in [SlowlyVaryingSpec::one(), SlowlyVaryingSpec::one_vee_log()] {
            let ev = FourierEvaluator::new(ell, 1e-10).unwrap();
            for t in [0.01, -0.7, 2.5] {
                let short = ev.sums_with_head(t, 1 << 16).unwrap();
                let long = ev.sums_with_head(t, 1 << 20).unwrap();
                assert!((short.b - long.b).norm() < 1e-12, "{ell} b({t})");
                assert!((short.g - long.g).norm() < 1e-12, "{ell} g({t})");
                assert!((short.g_prime - long.g_prime).norm() < 1e-9, "{ell} g'({t})");
            }
        }
    }
}
