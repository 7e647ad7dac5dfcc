//! Sums of u_n = 1/√(n³ ℓ(n)) and their tails.
//!
//! Everything in the coefficient module is built from this one sequence:
//! T_k = Σ_{n≥k} u_n gives β_k = c T_k / k, and Σ_n H_n u_n = Σ_k T_k / k
//! fixes the normalization c.
//!
//! Tails Σ_{n≥a} f(n) of a convex decreasing f are bracketed by
//! trapezoidal comparison with the integral:
//!
//! ```text
//! ∫_a^∞ f + f(a)/2  ≤  Σ_{n≥a} f(n)  ≤  ∫_a^∞ f + f(a)/2 + |f′(a)|/8
//! ```
//!
//! The integral is computed after the substitution x = a/s², which turns it
//! into an integral over (0, 1] with at worst a logarithmic endpoint
//! singularity.

use num_complex::Complex64;

use crate::numeric::{harmonic, tanh_sinh, tanh_sinh_complex, CompensatedSum};
use crate::{Error, Result, SlowlyVaryingSpec};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const ANCHOR_STRIDE: u64 = 1 << 12;
const QUAD_REL_TOL: f64 = 1e-14;

/// A value with a symmetric error radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certified {
    pub value: f64,
    pub radius: f64,
}

impl Certified {
    pub fn lower(&self) -> f64 {
        self.value - self.radius
    }

    pub fn upper(&self) -> f64 {
        self.value + self.radius
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SeriesKernel {
    pub ell: SlowlyVaryingSpec,
    /// Terms summed directly; tails start at `direct_terms + 1`.
    pub direct_terms: u64,
    /// anchors[j] = T_{j·stride + 1}
    anchors: Vec<f64>,
    /// Σ_n H_n u_n
    pub harmonic_series: Certified,
    /// Certification radius of T_{direct_terms + 1}.
    tail_radius: f64,
}

impl SeriesKernel {
    #[cfg(test)]
    /// Builds the kernel, doubling the number of direct terms until the tail
    /// uncertainty of Σ H_n u_n is below `abs_tol` or `term_budget` is hit.
    pub fn build(ell: SlowlyVaryingSpec, abs_tol: f64, term_budget: u64) -> Result<Self> {
        Self::build_covering(ell, abs_tol, term_budget, 0)
    }

    /// Like [`Self::build`] but sums at least `min_direct` terms directly.
    pub fn build_covering(ell: SlowlyVaryingSpec, abs_tol: f64, term_budget: u64, min_direct: u64) -> Result<Self> {
        let mut m: u64 = (1u64 << 16).max(min_direct.next_power_of_two());
        loop {
            if let Some(kernel) = Self::try_build(ell, m, abs_tol)? {
                return Ok(kernel);
            }
            if m >= term_budget {
                return Err(Error::Budget(format!(
                    "Σ H_n u_n for ℓ = {ell} not certified to {abs_tol:e} within {term_budget} terms"
                )));
            }
            m = (m * 2).min(term_budget);
        }
    }

    fn try_build(ell: SlowlyVaryingSpec, m: u64, abs_tol: f64) -> Result<Option<Self>> {
        let probe = Self {
            ell,
            direct_terms: m,
            anchors: Vec::new(),
            harmonic_series: Certified {
                value: 0.0,
                radius: 0.0,
            },
            tail_radius: 0.0,
        };
        let a = m + 1;
        let Some(tail_h) = probe.weighted_tail(a, 0.0) else {
            return Ok(None);
        };
        let Some(tail_u) = probe.tail_u(a) else {
            return Ok(None);
        };

        let mut sum_h = CompensatedSum::new();
        let mut h = CompensatedSum::new();
        for n in 1..=m {
            h.add(1.0 / n as f64);
            sum_h.add(h.value() * probe.u(n as f64));
        }
        let harmonic_series = Certified {
            value: sum_h.value() + tail_h.value,
            radius: tail_h.radius + 4.0 * f64::EPSILON * sum_h.value(),
        };
        if harmonic_series.radius > abs_tol {
            return Ok(None);
        }

        let mut anchors = vec![0.0; (m / ANCHOR_STRIDE + 1) as usize];
        if m % ANCHOR_STRIDE == 0 {
            anchors[(m / ANCHOR_STRIDE) as usize] = tail_u.value;
        }
        let mut t = CompensatedSum::starting_at(tail_u.value);
        for n in (1..=m).rev() {
            t.add(probe.u(n as f64));
            if (n - 1) % ANCHOR_STRIDE == 0 {
                anchors[((n - 1) / ANCHOR_STRIDE) as usize] = t.value();
            }
        }
        Ok(Some(Self {
            anchors,
            harmonic_series,
            tail_radius: tail_u.radius,
            ..probe
        }))
    }

    #[inline]
    pub fn u(&self, x: f64) -> f64 {
        1.0 / (x * x * x * self.ell.eval_real(x)).sqrt()
    }

    /// T_1 = Σ_n u_n.
    pub fn total(&self) -> f64 {
        self.anchors[0]
    }

    /// T_k = Σ_{n≥k} u_n for k ≥ 1.
    pub fn tail_sum(&self, k: u64) -> f64 {
        assert!(k >= 1);
        if k > self.direct_terms {
            return self
                .tail_u(k)
                .map(|c| c.value)
                .unwrap_or_else(|| self.tail_model(Complex64::new(k as f64, 0.0)).re);
        }
        let j = (k - 1).div_ceil(ANCHOR_STRIDE);
        let anchor_k = j * ANCHOR_STRIDE + 1;
        let mut s = if (j as usize) < self.anchors.len() {
            CompensatedSum::starting_at(self.anchors[j as usize])
        } else {
            CompensatedSum::starting_at(self.tail_u(anchor_k).expect("tail beyond direct range").value)
        };
        for n in k..anchor_k {
            s.add(self.u(n as f64));
        }
        s.value()
    }

    /// T_k together with its certification radius.
    pub fn tail_sum_certified(&self, k: u64) -> Certified {
        if k > self.direct_terms {
            if let Some(c) = self.tail_u(k) {
                return c;
            }
        }
        let value = self.tail_sum(k);
        Certified {
            value,
            radius: self.tail_radius + 4.0 * f64::EPSILON * value,
        }
    }

    /// Certified Σ_{n≥a} u_n, or None if a is too small for the convexity
    /// argument.
    pub fn tail_u(&self, a: u64) -> Option<Certified> {
        let af = a as f64;
        if af < 4.0 * self.ell.analytic_from() {
            return None;
        }
        let scale = 2.0 / af.sqrt();
        let q = if matches!(self.ell.family(), crate::slowly_varying::Family::Constant(_)) {
            crate::numeric::Quadrature {
                value: 1.0 / self.ell.eval_real(af).sqrt(),
                error: 0.0,
            }
        } else {
            let ln_a = af.ln();
            let ell = self.ell;
            tanh_sinh(|s| 1.0 / ell.eval_from_ln(ln_a - 2.0 * s.ln()).sqrt(), QUAD_REL_TOL)
        };
        let integral = scale * q.value;
        self.bracket(af, integral, scale * q.error, |x| self.u(x))
    }

    /// Certified Σ_{n≥a} u_n (H_n − shift).
    pub fn weighted_tail(&self, a: u64, shift: f64) -> Option<Certified> {
        let af = a as f64;
        if af < 64.0f64.max(4.0 * self.ell.analytic_from()) {
            return None;
        }
        let ln_a = af.ln();
        let ell = self.ell;
        let q = tanh_sinh(
            |s| {
                let ln_x = ln_a - 2.0 * s.ln();
                let inv_x = s * s / af;
                let h = ln_x + EULER_GAMMA + 0.5 * inv_x - inv_x * inv_x / 12.0;
                (h - shift) / ell.eval_from_ln(ln_x).sqrt()
            },
            QUAD_REL_TOL,
        );
        let scale = 2.0 / af.sqrt();
        let f = |x: f64| self.u(x) * (crate::numeric::harmonic_real(x) - shift);
        self.bracket(af, scale * q.value, scale * q.error, f)
    }

    fn bracket<F: Fn(f64) -> f64>(&self, a: f64, integral: f64, quad_err: f64, f: F) -> Option<Certified> {
        let step = a * 1e-3;
        let (f0, fp, fm) = (f(a), f(a + step), f(a - step));
        let derivative = (fp - fm) / (2.0 * step);
        let second = (fp - 2.0 * f0 + fm) / (step * step);
        if !(derivative < 0.0 && second > 0.0 && f0 > 0.0) {
            return None;
        }
        let width = 1.01 * derivative.abs() / 8.0;
        Some(Certified {
            value: integral + 0.5 * f0 + 0.5 * width,
            radius: 0.5 * width + quad_err + 1e-15 * integral.abs(),
        })
    }

    /// u(z) for complex z on the analytic branch.
    pub fn u_complex(&self, z: Complex64) -> Complex64 {
        let ln_z = z.ln();
        (-1.5 * ln_z).exp() / self.ell.eval_complex_from_ln(ln_z).sqrt()
    }

    /// u′(z).
    pub fn u_prime_complex(&self, z: Complex64) -> Complex64 {
        let ln_z = z.ln();
        let u = (-1.5 * ln_z).exp() / self.ell.eval_complex_from_ln(ln_z).sqrt();
        u * (-1.5 - 0.5 * self.ell.log_derivative_from_ln(ln_z)) / z
    }

    /// U(z) = ∫_z^∞ u along the ray through z.
    pub fn integral_tail_complex(&self, z: Complex64) -> Complex64 {
        let scale = 2.0 / z.sqrt();
        if let crate::slowly_varying::Family::Constant(v) = self.ell.family() {
            return scale / v.sqrt();
        }
        let ln_z = z.ln();
        let ell = self.ell;
        let q = tanh_sinh_complex(
            |s| 1.0 / ell.eval_complex_from_ln(ln_z - 2.0 * s.ln()).sqrt(),
            QUAD_REL_TOL,
        );
        scale * q.value
    }

    /// Smooth model of T_k: U(z) + u(z)/2 − u′(z)/12 (Euler–Maclaurin).
    pub fn tail_model(&self, z: Complex64) -> Complex64 {
        self.integral_tail_complex(z) + 0.5 * self.u_complex(z) - self.u_prime_complex(z) / 12.0
    }
}

/// Σ_{n>N} u_n (H_n − H_N) = Σ_{k>N} T_k / k, certified.
pub(crate) fn tail_of_beta_mass(kernel: &SeriesKernel, horizon: u64) -> Result<Certified> {
    let h_n = harmonic(horizon);
    // u_n (H_n − H_N) only becomes convex and decreasing a little past 2N.
    let m = kernel.direct_terms.max(8 * horizon);
    let tail = kernel
        .weighted_tail(m + 1, h_n)
        .ok_or_else(|| Error::Certification(format!("tail at {} is not in the convex range", m + 1)))?;
    let mut h = CompensatedSum::starting_at(h_n);
    let mut s = CompensatedSum::new();
    for n in (horizon + 1)..=m {
        h.add(1.0 / n as f64);
        s.add(kernel.u(n as f64) * (h.value() - h_n));
    }
    Ok(Certified {
        value: s.value() + tail.value,
        radius: tail.radius + 4.0 * f64::EPSILON * s.value(),
    })
}
