//! Positive, nondecreasing, slowly varying normalizers ℓ and the derived
//! sum ℓ*(n) = Σ_{j ≤ n} 1/(j ℓ(j)).
//!
//! Only closed-form families are supported. Every built-in family is clamped
//! below at 1, so the floor and monotonicity can be checked when the spec is
//! built rather than discovered at evaluation time.
//!
//! The text form used in configuration files is
//!
//! | family                  | text              |
//! |-------------------------|-------------------|
//! | ℓ ≡ v (v ≥ 1)           | `const:v`         |
//! | 1 ∨ log n               | `one_vee_log`     |
//! | max(1, logᵝ n)          | `log_pow:β`       |
//! | max(1, (log log n)ᵝ)    | `iter_log_pow:β`  |

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numeric::CompensatedSum;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Constant(f64),
    OneVeeLog,
    LogPower(f64),
    IteratedLogPower(f64),
}

/// A validated slowly varying normalizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct SlowlyVaryingSpec {
    family: Family,
}

impl TryFrom<Family> for SlowlyVaryingSpec {
    type Error = Error;

    fn try_from(family: Family) -> Result<Self> {
        Self::new(family)
    }
}

impl From<SlowlyVaryingSpec> for Family {
    fn from(spec: SlowlyVaryingSpec) -> Self {
        spec.family
    }
}

impl SlowlyVaryingSpec {
    pub fn new(family: Family) -> Result<Self> {
        let ok = match family {
            Family::Constant(v) => v.is_finite() && v >= 1.0,
            Family::OneVeeLog => true,
            Family::LogPower(b) | Family::IteratedLogPower(b) => b.is_finite() && b >= 0.0,
        };
        if !ok {
            return Err(Error::InvalidSpec(format!(
                "slowly varying family {family:?} violates the floor/monotonicity requirements"
            )));
        }
        Ok(Self { family })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(Family::Constant(value))
    }

    /// ℓ ≡ 1.
    pub fn one() -> Self {
        Self {
            family: Family::Constant(1.0),
        }
    }

    /// ℓ(n) = 1 ∨ log n.
    pub fn one_vee_log() -> Self {
        Self {
            family: Family::OneVeeLog,
        }
    }

    pub fn log_power(exponent: f64) -> Result<Self> {
        Self::new(Family::LogPower(exponent))
    }

    pub fn iterated_log_power(exponent: f64) -> Result<Self> {
        Self::new(Family::IteratedLogPower(exponent))
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Lower bound of ℓ over n ≥ 1.
    pub fn floor(&self) -> f64 {
        match self.family {
            Family::Constant(v) => v,
            _ => 1.0,
        }
    }

    /// ℓ(n) for n ≥ 1.
    pub fn eval(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("ℓ is only defined for n >= 1".into()));
        }
        Ok(self.eval_real(n as f64))
    }

    /// The same closed form on real x ≥ 1. Used by the tail integrals.
    pub fn eval_real(&self, x: f64) -> f64 {
        match self.family {
            Family::Constant(v) => v,
            Family::OneVeeLog => x.ln().max(1.0),
            Family::LogPower(b) => x.ln().max(0.0).powf(b).max(1.0),
            Family::IteratedLogPower(b) => {
                let l = x.ln();
                if l <= 1.0 {
                    1.0
                } else {
                    l.ln().powf(b).max(1.0)
                }
            }
        }
    }

    /// First point beyond which the family is given by its unclamped
    /// analytic formula (so complex continuation is valid to the right).
    pub fn analytic_from(&self) -> f64 {
        match self.family {
            Family::Constant(_) => 1.0,
            Family::OneVeeLog | Family::LogPower(_) => std::f64::consts::E,
            // (log log x)^β ≥ 1 once log log x ≥ 1.
            Family::IteratedLogPower(_) => std::f64::consts::E.exp(),
        }
    }

    /// ℓ evaluated from ln x, so that huge arguments do not overflow.
    /// Valid for x ≥ [`Self::analytic_from`].
    pub fn eval_from_ln(&self, ln_x: f64) -> f64 {
        match self.family {
            Family::Constant(v) => v,
            Family::OneVeeLog => ln_x.max(1.0),
            Family::LogPower(b) => ln_x.max(0.0).powf(b).max(1.0),
            Family::IteratedLogPower(b) => {
                if ln_x <= 1.0 {
                    1.0
                } else {
                    ln_x.ln().powf(b).max(1.0)
                }
            }
        }
    }

    /// Analytic continuation of the unclamped formula, as a function of
    /// ln z. Valid for Re z ≥ [`Self::analytic_from`].
    pub fn eval_complex_from_ln(&self, ln_z: Complex64) -> Complex64 {
        match self.family {
            Family::Constant(v) => Complex64::new(v, 0.0),
            Family::OneVeeLog => ln_z,
            Family::LogPower(b) => ln_z.powf(b),
            Family::IteratedLogPower(b) => ln_z.ln().powf(b),
        }
    }

    /// z ℓ′(z)/ℓ(z) for the unclamped formula, as a function of ln z.
    pub fn log_derivative_from_ln(&self, ln_z: Complex64) -> Complex64 {
        match self.family {
            Family::Constant(_) => Complex64::new(0.0, 0.0),
            Family::OneVeeLog => 1.0 / ln_z,
            Family::LogPower(b) => b / ln_z,
            Family::IteratedLogPower(b) => b / (ln_z * ln_z.ln()),
        }
    }

    /// ℓ*(n) = Σ_{j=1}^n 1/(j ℓ(j)).
    pub fn ell_star(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("ℓ* is only defined for n >= 1".into()));
        }
        let mut acc = EllStar::new(*self);
        acc.advance_to(n);
        Ok(acc.value())
    }

    /// Σ_{j=m+1}^n 1/(j ℓ(j)).
    pub fn ell_star_increment(&self, m: u64, n: u64) -> f64 {
        let mut s = CompensatedSum::new();
        for j in (m + 1)..=n {
            s.add(1.0 / (j as f64 * self.eval_real(j as f64)));
        }
        s.value()
    }

    /// Potter-type envelope check over a grid of (x, y) pairs.
    pub fn potter_check(&self, delta: f64, grid: &[(u64, u64)], bound: f64) -> Result<PotterReport> {
        if grid.is_empty() {
            return Err(Error::InvalidInput("potter_check needs a non-empty grid".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidInput(format!("delta = {delta} is not in (0, 1)")));
        }
        let mut max_ratio = f64::NEG_INFINITY;
        let mut worst = grid[0];
        for &(x, y) in grid {
            if x < 2 || y < 2 {
                return Err(Error::InvalidInput(format!(
                    "Potter grid entries must be >= 2, got ({x}, {y})"
                )));
            }
            let ratio = potter_ratio(self, delta, x, y);
            if ratio > max_ratio {
                max_ratio = ratio;
                worst = (x, y);
            }
        }
        Ok(PotterReport {
            delta,
            bound,
            max_ratio,
            worst_pair: worst,
            passes: max_ratio <= bound,
        })
    }
}

fn potter_ratio(spec: &SlowlyVaryingSpec, delta: f64, x: u64, y: u64) -> f64 {
    let (xf, yf) = (x as f64, y as f64);
    let envelope = (yf / xf).powf(delta).max((xf / yf).powf(delta));
    spec.eval_real(yf) / spec.eval_real(xf) / envelope
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotterReport {
    pub delta: f64,
    pub bound: f64,
    /// max over pairs of [ℓ(y)/ℓ(x)] / max((y/x)^δ, (x/y)^δ)
    pub max_ratio: f64,
    pub worst_pair: (u64, u64),
    pub passes: bool,
}

/// Incrementally extendable ℓ*(n).
#[derive(Debug, Clone)]
pub struct EllStar {
    spec: SlowlyVaryingSpec,
    n: u64,
    sum: CompensatedSum,
}

impl EllStar {
    pub fn new(spec: SlowlyVaryingSpec) -> Self {
        Self {
            spec,
            n: 0,
            sum: CompensatedSum::new(),
        }
    }

    /// Current index n (0 before the first step).
    pub fn index(&self) -> u64 {
        self.n
    }

    /// Moves from ℓ*(n) to ℓ*(n + 1) and returns the new value.
    pub fn step(&mut self) -> f64 {
        self.n += 1;
        let j = self.n as f64;
        self.sum.add(1.0 / (j * self.spec.eval_real(j)));
        self.value()
    }

    pub fn advance_to(&mut self, n: u64) {
        while self.n < n {
            self.step();
        }
    }

    pub fn value(&self) -> f64 {
        self.sum.value()
    }
}

impl fmt::Display for SlowlyVaryingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Constant(v) => write!(f, "const:{v}"),
            Family::OneVeeLog => f.write_str("one_vee_log"),
            Family::LogPower(b) => write!(f, "log_pow:{b}"),
            Family::IteratedLogPower(b) => write!(f, "iter_log_pow:{b}"),
        }
    }
}

impl FromStr for SlowlyVaryingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let number = |a: Option<&str>| -> Result<f64> {
            let a = a.ok_or_else(|| Error::Parse(format!("`{s}` needs a numeric parameter")))?;
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("`{a}` in `{s}` is not a number")))
        };
        let family = match name {
            "const" => Family::Constant(number(arg)?),
            "one_vee_log" if arg.is_none() => Family::OneVeeLog,
            "log_pow" => Family::LogPower(number(arg)?),
            "iter_log_pow" => Family::IteratedLogPower(number(arg)?),
            _ => return Err(Error::Parse(format!("unknown slowly varying spec `{s}`"))),
        };
        Self::new(family)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn builtins() -> Vec<SlowlyVaryingSpec> {
        vec![
            SlowlyVaryingSpec::one(),
            SlowlyVaryingSpec::constant(4.0).unwrap(),
            SlowlyVaryingSpec::one_vee_log(),
            SlowlyVaryingSpec::log_power(0.5).unwrap(),
            SlowlyVaryingSpec::log_power(2.5).unwrap(),
            SlowlyVaryingSpec::log_power(3.0).unwrap(),
            SlowlyVaryingSpec::iterated_log_power(1.0).unwrap(),
            SlowlyVaryingSpec::iterated_log_power(2.0).unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        assert_eq!(SlowlyVaryingSpec::one().eval(100).unwrap(), 1.0);
        assert_eq!(SlowlyVaryingSpec::one_vee_log().eval(2).unwrap(), 1.0);
        let n = 3f64.exp().round() as u64;
        assert!((SlowlyVaryingSpec::one_vee_log().eval(n).unwrap() - 3.0).abs() < 0.01);
    }

    #[test]
    fn rejects_zero_and_bad_parameters() {
        assert!(SlowlyVaryingSpec::one().eval(0).is_err());
        assert!(SlowlyVaryingSpec::one().ell_star(0).is_err());
        assert!(SlowlyVaryingSpec::constant(0.5).is_err());
        assert!(SlowlyVaryingSpec::constant(f64::NAN).is_err());
        assert!(SlowlyVaryingSpec::log_power(-1.0).is_err());
        assert!(SlowlyVaryingSpec::iterated_log_power(f64::INFINITY).is_err());
    }

    #[test]
    fn ell_star_examples() {
        let one = SlowlyVaryingSpec::one();
        assert_eq!(one.ell_star(1).unwrap(), 1.0);
        assert!((one.ell_star(3).unwrap() - 11.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ell_star_tracks_log_log_between_1e3_and_1e6() {
        // Oracle: Σ_{10³ < j ≤ 10⁶} 1/(j log j) summed backwards in a plain loop.
        let mut oracle = 0.0f64;
        for j in (1001..=1_000_000u64).rev() {
            let jf = j as f64;
            oracle += 1.0 / (jf * jf.ln());
        }
        let spec = SlowlyVaryingSpec::one_vee_log();
        let diff = spec.ell_star(1_000_000).unwrap() - spec.ell_star(1000).unwrap();
        assert!((diff - oracle).abs() < 1e-10);
        let loglog = 1e6f64.ln().ln() - 1e3f64.ln().ln();
        assert!((diff / loglog - 1.0).abs() < 0.02, "{diff} vs {loglog}");
    }

    #[test]
    fn ell_star_minus_log_log_is_flat_up_to_1e8() {
        let spec = SlowlyVaryingSpec::one_vee_log();
        let mut acc = EllStar::new(spec);
        acc.advance_to(1000);
        let base = acc.value() - 1000f64.ln().ln();
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        let mut checkpoint = 1000u64;
        while checkpoint < 100_000_000 {
            checkpoint = (checkpoint as f64 * 1.25) as u64;
            let checkpoint = checkpoint.min(100_000_000);
            acc.advance_to(checkpoint);
            let d = acc.value() - (checkpoint as f64).ln().ln() - base;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        assert!(hi - lo <= 0.05, "range {lo}..{hi}");
    }

    #[test]
    fn ell_star_incremental_matches_direct() {
        let spec = SlowlyVaryingSpec::log_power(1.5).unwrap();
        let mut acc = EllStar::new(spec);
        acc.advance_to(5000);
        let m = acc.value();
        acc.advance_to(20_000);
        let direct = m + spec.ell_star_increment(5000, 20_000);
        assert!((acc.value() - direct).abs() <= 1e-12 * direct);
        assert!((spec.ell_star(20_000).unwrap() - acc.value()).abs() <= 1e-12 * direct);
    }

    #[test]
    fn monotone_on_a_grid_up_to_1e7() {
        for spec in builtins() {
            let mut prev = spec.eval(1).unwrap();
            assert!(prev >= spec.floor());
            let mut n = 1u64;
            while n < 10_000_000 {
                n = if n < 10_000 { n + 1 } else { n + n / 997 };
                let v = spec.eval(n).unwrap();
                assert!(v >= prev, "{spec} decreases at {n}");
                assert!(v >= 1.0);
                prev = v;
            }
        }
    }

    #[test]
    fn doubling_ratio_tends_to_one() {
        // |ℓ(2n)/ℓ(n) - 1| decreases to 0; the first n at which it is below
        // 0.05 grows with the exponent of the family.
        for spec in builtins() {
            let mut prev = f64::INFINITY;
            let mut n = 1_000_000f64;
            while n < 1e300 {
                let d = (spec.eval_real(2.0 * n) / spec.eval_real(n) - 1.0).abs();
                assert!(d <= prev + 1e-15, "{spec}");
                prev = d;
                n *= 1e6;
            }
            assert!(prev <= 0.05, "{spec}: {prev}");
        }
        for spec in [
            SlowlyVaryingSpec::one(),
            SlowlyVaryingSpec::log_power(0.5).unwrap(),
            SlowlyVaryingSpec::iterated_log_power(1.0).unwrap(),
        ] {
            let d = spec.eval_real(2e6) / spec.eval_real(1e6) - 1.0;
            assert!(d.abs() <= 0.05, "{spec}: {d}");
        }
        // 1 ∨ log n needs n slightly past 10⁶: log 2 / log n ≤ 0.05 ⇔ n ≥ 2^20.
        let l = SlowlyVaryingSpec::one_vee_log();
        assert!(l.eval_real(2e6) / l.eval_real(1e6) - 1.0 > 0.05);
        assert!(l.eval_real(2.0 * 2_097_152.0) / l.eval_real(2_097_152.0) - 1.0 <= 0.05);
    }

    #[test]
    fn summability_dichotomy_for_log_powers() {
        // Σ 1/(n log^β n): the integral tail (log N)^{1-β}/(β-1) vanishes iff β > 1.
        for (beta, converges) in [(0.5, false), (1.0, false), (1.5, true), (3.0, true)] {
            let spec = SlowlyVaryingSpec::log_power(beta).unwrap();
            let mut s = CompensatedSum::new();
            let mut at_1e6 = 0.0;
            for n in 1..=10_000_000u64 {
                s.add(1.0 / (n as f64 * spec.eval_real(n as f64)));
                if n == 1_000_000 {
                    at_1e6 = s.value();
                }
            }
            let growth = s.value() - at_1e6;
            let ln = 1e7f64.ln();
            if converges {
                let tail = ln.powf(1.0 - beta) / (beta - 1.0);
                let tail_1e6 = 1e6f64.ln().powf(1.0 - beta) / (beta - 1.0);
                assert!(growth <= tail_1e6 && tail.is_finite());
            } else {
                // partial sums still moving by at least the integral from 1e6 to 1e7
                let lower = if beta == 1.0 {
                    ln.ln() - 1e6f64.ln().ln()
                } else {
                    (ln.powf(1.0 - beta) - 1e6f64.ln().powf(1.0 - beta)) / (1.0 - beta)
                };
                assert!(growth >= 0.99 * lower, "beta={beta}: {growth} vs {lower}");
            }
        }
    }

    #[test]
    fn potter_examples() {
        let grid: Vec<(u64, u64)> = (2..=6).map(|e| (10u64.pow(e), 10u64.pow(e))).collect();
        let r = SlowlyVaryingSpec::one().potter_check(0.1, &grid, 1.0).unwrap();
        assert_eq!(r.max_ratio, 1.0);
        assert!(r.passes);

        let grid: Vec<(u64, u64)> = (100..=1_000_000u64).step_by(997).map(|n| (n, 2 * n)).collect();
        let r = SlowlyVaryingSpec::one_vee_log().potter_check(0.1, &grid, 2.0).unwrap();
        assert!(r.passes);
        for &(x, y) in &grid {
            assert!((y as f64).ln() / (x as f64).ln() <= 2.0 * 2f64.powf(0.1));
        }

        let spec = SlowlyVaryingSpec::log_power(3.0).unwrap();
        let r = spec.potter_check(0.05, &[(10, 1_000_000)], 100.0).unwrap();
        let expected = 6f64.powi(3) / 1e5f64.powf(0.05);
        assert!((r.max_ratio - expected).abs() < 1e-12 * expected);
        assert!(!r.passes);
        assert!(spec.potter_check(0.05, &[(10, 1_000_000)], 200.0).unwrap().passes);

        assert!(spec.potter_check(0.05, &[], 2.0).is_err());
        assert!(spec.potter_check(0.05, &[(1, 10)], 2.0).is_err());
    }

    #[test]
    fn text_form_examples() {
        assert_eq!(
            "one_vee_log".parse::<SlowlyVaryingSpec>().unwrap(),
            SlowlyVaryingSpec::one_vee_log()
        );
        assert_eq!(
            "log_pow:2.5".parse::<SlowlyVaryingSpec>().unwrap(),
            SlowlyVaryingSpec::log_power(2.5).unwrap()
        );
        assert_eq!(
            "const:1".parse::<SlowlyVaryingSpec>().unwrap(),
            SlowlyVaryingSpec::one()
        );
        assert!("const:0.5".parse::<SlowlyVaryingSpec>().is_err());
        assert!("log_pow".parse::<SlowlyVaryingSpec>().is_err());
        assert!("one_vee_log:3".parse::<SlowlyVaryingSpec>().is_err());
        assert!("harmonic".parse::<SlowlyVaryingSpec>().is_err());
    }

    proptest! {
        #[test]
        fn text_form_round_trips(kind in 0u8..4, x in 0.0f64..50.0) {
            let spec = match kind {
                0 => SlowlyVaryingSpec::constant(1.0 + x).unwrap(),
                1 => SlowlyVaryingSpec::one_vee_log(),
                2 => SlowlyVaryingSpec::log_power(x).unwrap(),
                _ => SlowlyVaryingSpec::iterated_log_power(x).unwrap(),
            };
            let back: SlowlyVaryingSpec = spec.to_string().parse().unwrap();
            prop_assert_eq!(back, spec);
        }

        #[test]
        fn monotone_at_random_points(kind in 0u8..4, beta in 0.0f64..6.0, n in 1u64..u64::MAX / 4) {
            let spec = match kind {
                0 => SlowlyVaryingSpec::constant(1.0 + beta).unwrap(),
                1 => SlowlyVaryingSpec::one_vee_log(),
                2 => SlowlyVaryingSpec::log_power(beta).unwrap(),
                _ => SlowlyVaryingSpec::iterated_log_power(beta).unwrap(),
            };
            prop_assert!(spec.eval(n + 1).unwrap() >= spec.eval(n).unwrap());
            prop_assert!(spec.eval(n).unwrap() >= 1.0);
        }
    }
}
