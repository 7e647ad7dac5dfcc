//! The renewal pair behind the martingale approximation.
//!
//! For a slowly varying ℓ the filter
//!
//! ```text
//! β_k = (c/k) Σ_{n≥k} 1/√(n³ ℓ(n)),        Σ_k β_k = 1,
//! ```
//!
//! defines B(z) = Σ β_k z^k, and A(z) = 1/(1 − B(z)) = Σ α_n z^n has
//! α_0 = 1 and α_n = Σ_{k=1}^n β_k α_{n−k}. Tails γ_j = Σ_{k≥j} β_k control
//! the size of the remainder.

mod fourier;
mod kernel;

use serde::{Deserialize, Serialize};

pub use fourier::{a_eval, b_eval, fourier_factor_f, fourier_factor_g, FourierEval, FourierEvaluator};
pub use kernel::Certified;

use crate::numeric::CompensatedSum;
use crate::{Error, Result, SlowlyVaryingSpec};
use kernel::{tail_of_beta_mass, SeriesKernel};

/// Largest number of terms summed directly before giving up on a tolerance.
pub const DEFAULT_TERM_BUDGET: u64 = 1 << 26;

/// β, γ and (optionally) α up to a horizon N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub ell: SlowlyVaryingSpec,
    pub horizon: u64,
    pub c: f64,
    /// beta[k − 1] = β_k for 1 ≤ k ≤ N + 1. The extra entry lets
    /// [`cn_mass`] reach N.
    pub beta: Vec<f64>,
    /// gamma[j − 1] = γ_j for 1 ≤ j ≤ N + 1.
    pub gamma: Vec<f64>,
    /// alpha[n] = α_n for 0 ≤ n ≤ N; empty until [`alpha_table`] runs.
    pub alpha: Vec<f64>,
    /// Upper bound on Σ_{k>N} β_k.
    pub tail_bound: f64,
}

impl CoefficientTable {
    /// β_k, 1 ≤ k ≤ N + 1.
    pub fn beta(&self, k: u64) -> f64 {
        self.beta[(k - 1) as usize]
    }

    /// γ_j, 1 ≤ j ≤ N + 1.
    pub fn gamma(&self, j: u64) -> f64 {
        self.gamma[(j - 1) as usize]
    }

    /// α_n, 0 ≤ n ≤ N.
    pub fn alpha(&self, n: u64) -> f64 {
        self.alpha[n as usize]
    }

    pub fn has_alpha(&self) -> bool {
        !self.alpha.is_empty()
    }

    /// max over 1 ≤ n ≤ `upto` of |α_n − Σ_{k=1}^n β_k α_{n−k}|, with the
    /// convolution re-evaluated in compensated arithmetic.
    pub fn recursion_residual(&self, upto: u64) -> f64 {
        let upto = upto.min(self.horizon) as usize;
        let mut worst: f64 = 0.0;
        for n in 1..=upto {
            let s: CompensatedSum = (1..=n).map(|k| self.beta[k - 1] * self.alpha[n - k]).collect();
            worst = worst.max((self.alpha[n] - s.value()).abs());
        }
        worst
    }
}

fn check_tolerance(tolerance: f64) -> Result<()> {
    if !(tolerance > 0.0 && tolerance <= 1e-4) {
        return Err(Error::InvalidInput(format!(
            "tolerance must lie in (0, 1e-4], got {tolerance}"
        )));
    }
    Ok(())
}

fn kernel_for(ell: SlowlyVaryingSpec, tolerance: f64, min_direct: u64) -> Result<SeriesKernel> {
    check_tolerance(tolerance)?;
    // Σ H_n u_n ≥ u_1, so this absolute target keeps |c Σ − 1| below tolerance/2.
    let u1 = 1.0 / ell.eval_real(1.0).sqrt();
    SeriesKernel::build_covering(ell, 0.5 * tolerance * u1, DEFAULT_TERM_BUDGET, min_direct)
}

/// The constant c making Σ_k β_k = 1.
pub fn normalization_constant(ell: SlowlyVaryingSpec, tolerance: f64) -> Result<f64> {
    let kernel = kernel_for(ell, tolerance, 0)?;
    Ok(1.0 / kernel.harmonic_series.value)
}

/// Builds β_1..β_{N+1} and γ_1..γ_{N+1}.
pub fn beta_table(ell: SlowlyVaryingSpec, horizon: u64, tolerance: f64) -> Result<CoefficientTable> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon N must be at least 1".into()));
    }
    let kernel = kernel_for(ell, tolerance, horizon + 2)?;
    let c = 1.0 / kernel.harmonic_series.value;
    let n = horizon as usize;

    let mut beta = vec![0.0; n + 1];
    let mut t = CompensatedSum::starting_at(kernel.tail_sum(horizon + 2));
    for k in (1..=n + 1).rev() {
        t.add(kernel.u(k as f64));
        beta[k - 1] = c * t.value() / k as f64;
    }

    let tail = tail_of_beta_mass(&kernel, horizon)?;
    let mut gamma = vec![0.0; n + 1];
    gamma[n] = c * tail.value;
    for j in (1..=n).rev() {
        gamma[j - 1] = gamma[j] + beta[j - 1];
    }
    let table = CoefficientTable {
        ell,
        horizon,
        c,
        beta,
        gamma,
        alpha: Vec::new(),
        tail_bound: c * tail.upper(),
    };
    if (table.gamma[0] - 1.0).abs() > tolerance {
        return Err(Error::Certification(format!(
            "γ_1 = {} misses 1 by more than {tolerance:e}",
            table.gamma[0]
        )));
    }
    Ok(table)
}

/// Fills α_0..α_N by the convolution recursion.
pub fn alpha_table(mut table: CoefficientTable) -> CoefficientTable {
    let n = table.horizon as usize;
    // rev[n − m] = α_m so that α_{n−1}, …, α_0 is a contiguous slice.
    let mut rev = vec![0.0; n + 1];
    rev[n] = 1.0;
    for m in 1..=n {
        rev[n - m] = dot(&table.beta[..m], &rev[n - m + 1..]);
    }
    rev.reverse();
    table.alpha = rev;
    table
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// (n, (α_n − α_{n+1}) √(n³/ℓ(n))) for 1 ≤ n < N.
pub fn prop3_ratio(table: &CoefficientTable) -> Result<Vec<(u64, f64)>> {
    if !table.has_alpha() {
        return Err(Error::InvalidInput("α has not been filled".into()));
    }
    Ok((1..table.horizon)
        .map(|n| {
            let nf = n as f64;
            let d = table.alpha(n) - table.alpha(n + 1);
            (n, d * (nf * nf * nf / table.ell.eval_real(nf)).sqrt())
        })
        .collect())
}

/// Σ_{j=0}^N α_j β_{N+1−j}.
pub fn cn_mass(table: &CoefficientTable, n: u64) -> Result<f64> {
    if !table.has_alpha() || n > table.horizon {
        return Err(Error::InvalidInput(format!("cn_mass needs α and β filled through {n}")));
    }
    let s: CompensatedSum = (0..=n).map(|j| table.alpha(j) * table.beta(n + 1 - j)).collect();
    Ok(s.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_alpha_cases() {
        let t = alpha_table(beta_table(SlowlyVaryingSpec::one(), 10, 1e-10).unwrap());
        assert_eq!(t.alpha(0), 1.0);
        assert_eq!(t.alpha(1), t.beta(1));
        assert!((t.alpha(2) - (t.beta(1) * t.beta(1) + t.beta(2))).abs() < 1e-16);
        assert_eq!(cn_mass(&t, 0).unwrap(), t.beta(1));
        assert!((cn_mass(&t, 1).unwrap() - (t.beta(2) + t.beta(1) * t.beta(1))).abs() < 1e-16);
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(beta_table(SlowlyVaryingSpec::one(), 0, 1e-8).is_err());
        assert!(normalization_constant(SlowlyVaryingSpec::one(), 0.1).is_err());
        assert!(normalization_constant(SlowlyVaryingSpec::one(), 0.0).is_err());
    }
}
