//! Seeded Monte Carlo experiments: LIL peaks, functional-LIL extremes,
//! conditional CLT distances and remainder growth.
//!
//! Every replication draws from its own stream keyed by
//! (master seed, replication index), and results are collected in
//! replication order, so reports do not depend on the size of the rayon
//! pool.

mod cclt;
pub mod ks;
mod lil;
mod remainder;

use serde::{Deserialize, Serialize};

use crate::martingale::{sigma2, Sigma2Budget, Sigma2Method};
use crate::processes::ProcessModel;
use crate::{Error, Result};

pub use cclt::{run_cclt, CcltReport, CcltResult, MarginalKs};
pub use lil::{
    run_flil, run_lil, run_lil_flil, FlilAggregate, FlilReplication, FlilReport, Functionals, LilReplication, LilReport,
};
pub use remainder::{remainder_growth, remainder_growth_with, RemainderForm, RemainderGrowth, RemainderRung};

/// Shortest horizon accepted by the LIL, FLIL and CCLT runs.
pub const MIN_HORIZON: u64 = 1_000;

/// √(2n · max(log log n, log log 3)).
pub fn lil_scale(n: u64) -> f64 {
    let n = n as f64;
    (2.0 * n * n.ln().ln().max(LNLN3)).sqrt()
}

pub(crate) const LNLN3: f64 = 0.094_047_827_616_699_1;

/// Where σ comes from when normalizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    Analytic,
    Estimated,
}

/// σ for normalization: closed form, or the increment estimate of σ².
pub fn sigma_reference(model: &ProcessModel, mode: SigmaMode, budget: Sigma2Budget) -> Result<f64> {
    let s2 = match mode {
        SigmaMode::Analytic => model
            .analytic_sigma2()
            .ok_or_else(|| Error::InvalidInput(format!("no closed-form σ² for {model}; use sigma_mode = estimated")))?,
        SigmaMode::Estimated => sigma2(model, Sigma2Method::Increment, budget)?.value,
    };
    Ok(s2.max(0.0).sqrt())
}

/// Order statistics of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

impl Summary {
    /// Empty input gives all zeros.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: 0.0,
                sd: 0.0,
                min: 0.0,
                q10: 0.0,
                median: 0.0,
                q90: 0.0,
                max: 0.0,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (mean, se) = crate::martingale::mean_and_se(&v);
        Self {
            mean,
            sd: se * (v.len() as f64).sqrt(),
            min: v[0],
            q10: quantile_sorted(&v, 0.1),
            median: quantile_sorted(&v, 0.5),
            q90: quantile_sorted(&v, 0.9),
            max: v[v.len() - 1],
        }
    }
}

/// Linear interpolation between order statistics (Hyndman–Fan type 7).
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    assert!(!v.is_empty(), "quantile of an empty sample");
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn check_sigma(model: &ProcessModel, sigma_ref: f64) -> Result<()> {
    if !sigma_ref.is_finite() || sigma_ref < 0.0 {
        return Err(Error::InvalidInput(format!(
            "σ reference must be finite and ≥ 0, got {sigma_ref}"
        )));
    }
    if sigma_ref == 0.0 && !matches!(model, ProcessModel::Zero) {
        return Err(Error::InvalidInput(format!(
            "σ reference 0 is only allowed for the zero process, not {model}"
        )));
    }
    Ok(())
}

fn normalize(x: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        x / sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_guard() {
        assert!((lil_scale(3) - (6.0 * LNLN3).sqrt()).abs() < 1e-15);
        assert_eq!(lil_scale(2), (4.0 * LNLN3).sqrt());
        assert!((LNLN3 - 3f64.ln().ln()).abs() < 1e-17);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert!((quantile_sorted(&v, 0.1) - 1.4).abs() < 1e-15);
        let s = Summary::of(&[3.0, 1.0, 2.0]);
        assert_eq!((s.min, s.median, s.max), (1.0, 2.0, 3.0));
        assert!((s.sd - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigma_checks() {
        let z: ProcessModel = "zero".parse().unwrap();
        let i: ProcessModel = "iid:normal".parse().unwrap();
        assert!(check_sigma(&z, 0.0).is_ok());
        assert!(check_sigma(&i, 0.0).is_err());
        assert!(check_sigma(&i, f64::NAN).is_err());
        let b = Sigma2Budget {
            n: 10,
            reps: 10,
            seed: 0,
        };
        assert_eq!(sigma_reference(&i, SigmaMode::Analytic, b).unwrap(), 1.0);
    }
}
