//! Summability conditions on ‖E(S_n | F_0)‖ and their relatives.
//!
//! Every report carries the partial sums it computed, a power-law fit of the
//! summand over the last decade, and a verdict. A verdict is only
//! `ConvergesCertified` when an explicit bound on the remaining tail was
//! computed; extrapolated verdicts say so.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::martingale::resolvent_limit;
use crate::numeric::{tanh_sinh, CompensatedSum, GaussRule};
use crate::processes::{exact_cond_sn, DyadicFunctional, ProcessModel, Sampler, StartState};
use crate::rng::{StreamKey, StreamRole};
use crate::slowly_varying::Family;
use crate::{Error, Result, SlowlyVaryingSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConditionId {
    /// Σ n^{−3/2} ‖E(S_n|F_0)‖ < ∞.
    MW2,
    /// Σ n^{−3/2} √ℓ(n) log n ‖E(S_n|F_0)‖ < ∞.
    ZW5,
    /// Σ log^α n/(n L(n)) < ∞.
    LIN21,
    /// The Bernoulli-shift energy integral.
    BSHIFT22,
    /// Σ_r h(2^r) ‖E(S_{2^r}|F_0)‖ 2^{−r/2} < ∞.
    DYADIC,
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConvergesCertified,
    ConvergesExtrapolated,
    DivergesCertified,
    DivergesExtrapolated,
    Inconclusive,
}

impl Verdict {
    pub fn converges(self) -> bool {
        matches!(self, Verdict::ConvergesCertified | Verdict::ConvergesExtrapolated)
    }

    /// Larger is more favorable to convergence.
    pub fn rank(self) -> u8 {
        match self {
            Verdict::ConvergesCertified => 4,
            Verdict::ConvergesExtrapolated => 3,
            Verdict::Inconclusive => 2,
            Verdict::DivergesExtrapolated => 1,
            Verdict::DivergesCertified => 0,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::ConvergesCertified => "converges_certified",
            Verdict::ConvergesExtrapolated => "converges_extrapolated",
            Verdict::DivergesCertified => "diverges_certified",
            Verdict::DivergesExtrapolated => "diverges_extrapolated",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Power-law fit a_n ≈ C n^p of the summand and what it implies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailModel {
    /// Fitted exponent p (in the index of the series).
    pub exponent: Option<f64>,
    /// RMS residual of the fit in log space.
    pub fit_residual: Option<f64>,
    /// Index range of the fit.
    pub fit_range: Option<(u64, u64)>,
    /// Integral of the fitted power law beyond the last index.
    pub tail_estimate: Option<f64>,
    /// Certified upper bound on the remaining tail.
    pub tail_bound: Option<f64>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub inputs: BTreeMap<String, String>,
    /// (index, cumulative sum), nondecreasing.
    pub partial_sums: Vec<(u64, f64)>,
    pub tail_model: TailModel,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().map_or(0.0, |p| p.1)
    }
}

/// How v_n is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    Exact,
    MonteCarlo,
}

/// Sizes for the nested Monte Carlo estimator of v_n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NestedMc {
    /// Starts W_0 drawn from the stationary law.
    pub outer: usize,
    /// Conditional paths per start.
    pub inner: usize,
    pub seed: u64,
}

/// v_n = ‖E(S_n | F_0)‖₂ for n = 1..=N.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondNormSeq {
    pub model: String,
    pub mode: NormMode,
    pub values: Vec<f64>,
    /// Certified truncation error (exact mode) or standard error (MC).
    pub errors: Vec<f64>,
    /// Certified bound on sup_n v_n, 2‖Q Σ_{k≥0} Q^k g‖, when available.
    pub uniform_bound: Option<f64>,
}

impl CondNormSeq {
    /// v_n.
    pub fn get(&self, n: usize) -> f64 {
        self.values[n - 1]
    }
}

/// Largest n·(work per n) the exact mode will do.
const EXACT_WORK_LIMIT: u128 = 1 << 34;

/// Σ_{k=1}^n Q^k g = Qh − Q^{n+1}h with h = Σ_{k≥0} Q^k g, and Q is an L²
/// contraction, so v_n ≤ 2‖Qh‖ for every n.
fn uniform_bound(model: &ProcessModel) -> Option<f64> {
    let r = resolvent_limit(model).ok()?;
    let q = r.qh.l2_norm(model).ok()?;
    Some(2.0 * (q + r.truncation_bound) * (1.0 + 1e-12))
}

/// v_n for n = 1..=N.
pub fn cond_norm_seq(model: &ProcessModel, n_max: usize, mode: NormMode, mc: Option<NestedMc>) -> Result<CondNormSeq> {
    if n_max == 0 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    let (values, errors) = match mode {
        NormMode::Exact => exact_norms(model, n_max)?,
        NormMode::MonteCarlo => {
            let mc = mc.ok_or_else(|| Error::InvalidInput("Monte Carlo mode needs outer/inner sizes".into()))?;
            nested_mc(model, n_max, mc)?
        }
    };
    Ok(CondNormSeq {
        model: model.to_string(),
        mode,
        values,
        errors,
        uniform_bound: uniform_bound(model),
    })
}

fn exact_norms(model: &ProcessModel, n_max: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = n_max;
    match model {
        ProcessModel::Zero | ProcessModel::Iid(_) => Ok((vec![0.0; n], vec![0.0; n])),
        ProcessModel::Chain(c) => {
            let mut acc = vec![0.0; c.states()];
            let mut v = c.g.clone();
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                v = c.apply(&v);
                for (a, x) in acc.iter_mut().zip(&v) {
                    *a += x;
                }
                out.push(c.second_moment(&acc).max(0.0).sqrt());
            }
            Ok((out, vec![0.0; n]))
        }
        ProcessModel::Linear(l) => {
            let a = &l.coeffs;
            if n as u128 * a.len() as u128 > EXACT_WORK_LIMIT {
                return Err(Error::Budget(format!(
                    "exact v_n for J = {} up to N = {n} is too costly",
                    a.len() - 1
                )));
            }
            let mut prefix = Vec::with_capacity(a.len() + 1);
            let mut s = CompensatedSum::new();
            prefix.push(0.0);
            for x in a {
                s.add(*x);
                prefix.push(s.value());
            }
            let len = a.len();
            let energy: f64 = a.iter().map(|x| x * x).sum();
            let dropped = (l.tail_ratio * energy).sqrt();
            let mut vals = Vec::with_capacity(n);
            let mut errs = Vec::with_capacity(n);
            for m in 1..=n {
                // s_{j,m} = a_{j+1} + ⋯ + a_{j+m}
                let mut e = CompensatedSum::new();
                for j in 0..len.saturating_sub(1) {
                    let d = prefix[(j + m + 1).min(len)] - prefix[j + 1];
                    e.add(d * d);
                }
                vals.push(e.value().max(0.0).sqrt());
                errs.push(m as f64 * dropped);
            }
            Ok((vals, errs))
        }
        ProcessModel::BernoulliShift(b) => {
            if let DyadicFunctional::Affine { slope } = b.functional {
                // Σ_{k=1}^n 2^{−k} g, ‖g‖ = |slope|/√12
                let g = slope.abs() / 12f64.sqrt();
                let vals = (1..=n).map(|m| g * (1.0 - 0.5f64.powi(m as i32))).collect();
                return Ok((vals, vec![0.0; n]));
            }
            if n as u128 * n as u128 > EXACT_WORK_LIMIT / 64 {
                return Err(Error::Budget(format!(
                    "exact v_n for {model} up to N = {n} is too costly; use monte_carlo"
                )));
            }
            let vals = (1..=n as u64)
                .into_par_iter()
                .map(|m| exact_cond_sn(model, m)?.l2_norm(model))
                .collect::<Result<Vec<f64>>>()?;
            Ok((vals, vec![0.0; n]))
        }
    }
}

fn nested_mc(model: &ProcessModel, n_max: usize, mc: NestedMc) -> Result<(Vec<f64>, Vec<f64>)> {
    if !model.supports_conditioning() {
        return Err(Error::InvalidInput(format!(
            "{model} does not support fixing W_0; use exact mode"
        )));
    }
    if mc.outer < 2 || mc.inner < 2 {
        return Err(Error::InvalidInput(
            "nested Monte Carlo needs outer ≥ 2 and inner ≥ 2".into(),
        ));
    }
    let cost = mc.outer as u128 * mc.inner as u128 * n_max as u128 * model.step_cost() as u128;
    if cost > EXACT_WORK_LIMIT * 4 {
        return Err(Error::Budget(format!(
            "nested Monte Carlo would cost {cost} work units"
        )));
    }
    let b = mc.inner as f64;
    // per start: Ŝ² − s²/B, an unbiased estimate of E(S_n|W_0)²
    let per_start: Vec<Vec<f64>> = (0..mc.outer as u64)
        .into_par_iter()
        .map(|o| {
            let mut init = StreamKey::new(mc.seed, o, StreamRole::InitialState).rng();
            let probe = Sampler::new(
                model,
                StartState::Stationary,
                &mut init,
                StreamKey::new(mc.seed, o, StreamRole::Path).rng(),
            )
            .expect("stationary start");
            let start = match probe.state() {
                crate::processes::StateRef::Chain(i) => StartState::Chain(i),
                crate::processes::StateRef::Dyadic(w) => StartState::Dyadic(w),
                _ => StartState::Stationary,
            };
            let mut sum = vec![0.0; n_max];
            let mut sq = vec![0.0; n_max];
            for i in 0..mc.inner as u64 {
                let key = StreamKey::new(mc.seed, o, StreamRole::ConditionalPaths).with_sub(i);
                let mut s = Sampler::new(model, start, &mut init, key.rng()).expect("valid start");
                let mut acc = 0.0;
                for k in 0..n_max {
                    acc += s.step();
                    sum[k] += acc;
                    sq[k] += acc * acc;
                }
            }
            (0..n_max)
                .map(|k| {
                    let mean = sum[k] / b;
                    let var = (sq[k] - b * mean * mean) / (b - 1.0);
                    mean * mean - var / b
                })
                .collect()
        })
        .collect();
    let mut vals = Vec::with_capacity(n_max);
    let mut errs = Vec::with_capacity(n_max);
    for k in 0..n_max {
        let col: Vec<f64> = per_start.iter().map(|v| v[k]).collect();
        let (m, se) = crate::martingale::mean_and_se(&col);
        let v = m.max(0.0).sqrt();
        vals.push(v);
        // delta method; at v = 0 fall back to √se
        errs.push(if v > 0.0 { se / (2.0 * v) } else { se.sqrt() });
    }
    Ok((vals, errs))
}

/// Least-squares fit of ln a = c + p ln x over points with a > 0.
fn power_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, a)| *a > 0.0)
        .map(|(x, a)| (x.ln(), a.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let p = sxy / sxx;
    let c = my - p * mx;
    let rms = (pts.iter().map(|q| (q.1 - c - p * q.0).powi(2)).sum::<f64>() / n).sqrt();
    Some((p, c, rms))
}

/// Exponent margins for extrapolated verdicts.
const CONVERGE_BELOW: f64 = -1.02;
const DIVERGE_ABOVE: f64 = -1.0 - 1e-6;

/// Fit the summand (indexed by `index`) over its last decade and decide.
fn extrapolate(index: &[f64], summand: &[f64]) -> (TailModel, Verdict) {
    let last = *index.last().unwrap_or(&0.0);
    let window: Vec<(f64, f64)> = index
        .iter()
        .zip(summand)
        .filter(|(x, _)| **x >= last / 10.0)
        .map(|(x, a)| (*x, *a))
        .collect();
    decide(&window, summand.iter().all(|&a| a == 0.0))
}

/// Power-law verdict from a fit window ending at the last computed index.
fn decide(window: &[(f64, f64)], all_zero: bool) -> (TailModel, Verdict) {
    let empty = |description: &str, tail: Option<f64>| TailModel {
        exponent: None,
        fit_residual: None,
        fit_range: None,
        tail_estimate: tail,
        tail_bound: None,
        description: description.into(),
    };
    if all_zero {
        return (
            empty("all computed summands vanish", Some(0.0)),
            Verdict::ConvergesExtrapolated,
        );
    }
    let Some((p, c, rms)) = power_fit(window) else {
        return (
            empty("too few positive summands in the fit window", None),
            Verdict::Inconclusive,
        );
    };
    let last = window[window.len() - 1].0;
    let (verdict, tail, description) = if p < CONVERGE_BELOW {
        let tail = c.exp() * last.powf(p + 1.0) / (-p - 1.0);
        (
            Verdict::ConvergesExtrapolated,
            Some(tail),
            format!("summand ~ n^{p:.4}; fitted tail integrable"),
        )
    } else if p > DIVERGE_ABOVE {
        (
            Verdict::DivergesExtrapolated,
            None,
            format!("summand ~ n^{p:.4}; fitted tail not integrable"),
        )
    } else {
        (
            Verdict::Inconclusive,
            None,
            format!("summand ~ n^{p:.4}; too close to n^-1 to decide"),
        )
    };
    (
        TailModel {
            exponent: Some(p),
            fit_residual: Some(rms),
            fit_range: Some((window[0].0 as u64, last as u64)),
            tail_estimate: tail,
            tail_bound: None,
            description,
        },
        verdict,
    )
}

fn cumulative(index: impl Iterator<Item = u64>, summand: &[f64]) -> Vec<(u64, f64)> {
    let mut s = CompensatedSum::new();
    index
        .zip(summand)
        .map(|(n, a)| {
            s.add(*a);
            (n, s.value())
        })
        .collect()
}

/// ∫_N^∞ x^{−3/2} √ℓ(x) ln x dx after x = N/t², or None when the summand is
/// not yet decreasing at N.
fn zw5_tail_integral(ell: SlowlyVaryingSpec, n: f64) -> Option<f64> {
    let ln_n = n.ln();
    if n < ell.analytic_from() || ln_n <= 1.0 {
        return None;
    }
    // d ln f / d ln x = −3/2 + 1/ln x + ½ x ℓ′/ℓ, each term decreasing in x
    let slope = -1.5 + 1.0 / ln_n + 0.5 * ell.log_derivative_from_ln(num_complex::Complex64::new(ln_n, 0.0)).re;
    if slope >= 0.0 {
        return None;
    }
    let q = tanh_sinh(
        |t| {
            if t <= 0.0 {
                return 0.0;
            }
            let ln_x = ln_n - 2.0 * t.ln();
            2.0 * ell.eval_from_ln(ln_x).sqrt() * ln_x
        },
        1e-10,
    );
    Some((q.value + q.error) / n.sqrt() * (1.0 + 1e-10))
}

/// The MW2 and ZW5 series built from v.
pub fn mw_series(v: &CondNormSeq, ell: SlowlyVaryingSpec) -> Result<(ConditionReport, ConditionReport)> {
    mw_series_from(&v.values, v.uniform_bound, ell, &v.model)
}

/// [`mw_series`] for a bare sequence v_1..v_N with an optional certified
/// bound sup_{n>N} v_n ≤ C.
pub fn mw_series_from(
    v: &[f64],
    bound: Option<f64>,
    ell: SlowlyVaryingSpec,
    label: &str,
) -> Result<(ConditionReport, ConditionReport)> {
    if v.is_empty() {
        return Err(Error::InvalidInput("v must have at least one term".into()));
    }
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidInput("v must be finite and nonnegative".into()));
    }
    let n = v.len();
    let idx: Vec<f64> = (1..=n).map(|k| k as f64).collect();
    let mw: Vec<f64> = idx.iter().zip(v).map(|(k, x)| x / (k * k.sqrt())).collect();
    let zw: Vec<f64> = idx
        .iter()
        .zip(v)
        .map(|(k, x)| x / (k * k.sqrt()) * ell.eval_real(*k).sqrt() * k.ln())
        .collect();
    let mut inputs = BTreeMap::new();
    inputs.insert("v".to_string(), label.to_string());
    inputs.insert("N".to_string(), n.to_string());
    let make = |id: ConditionId, summand: &[f64], certified_tail: Option<f64>, extra: &[(&str, String)]| {
        let mut inputs = inputs.clone();
        for (k, val) in extra {
            inputs.insert(k.to_string(), val.clone());
        }
        let (mut tail, mut verdict) = extrapolate(&idx, summand);
        let mut notes = Vec::new();
        if let Some(b) = certified_tail {
            tail.tail_bound = Some(b);
            verdict = Verdict::ConvergesCertified;
            notes.push(format!(
                "tail beyond N bounded by integral comparison with v_n ≤ {}",
                bound.unwrap_or(0.0)
            ));
        }
        ConditionReport {
            condition: id,
            inputs,
            partial_sums: cumulative(1..=n as u64, summand),
            tail_model: tail,
            verdict,
            notes,
        }
    };
    let nf = n as f64;
    let mw_tail = bound.map(|c| 2.0 * c / nf.sqrt());
    let zw_tail = bound.and_then(|c| {
        if c == 0.0 {
            Some(0.0)
        } else {
            zw5_tail_integral(ell, nf).map(|i| c * i)
        }
    });
    let r2 = make(ConditionId::MW2, &mw, mw_tail, &[]);
    let r5 = make(ConditionId::ZW5, &zw, zw_tail, &[("ell", ell.to_string())]);
    Ok((r2, r5))
}

/// Σ_{n≥2} log^α n/(n L(n)) up to N, certified for powers of log.
pub fn linear_criterion(l: SlowlyVaryingSpec, alpha: f64, n_max: u64) -> Result<ConditionReport> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("α must be nonnegative, got {alpha}")));
    }
    if n_max < 3 {
        return Err(Error::InvalidInput("N must be at least 3".into()));
    }
    let summand: Vec<f64> = (2..=n_max)
        .map(|n| {
            let x = n as f64;
            x.ln().powf(alpha) / (x * l.eval_real(x))
        })
        .collect();
    let idx: Vec<f64> = (2..=n_max).map(|n| n as f64).collect();
    let mut inputs = BTreeMap::new();
    inputs.insert("L".to_string(), l.to_string());
    inputs.insert("alpha".to_string(), alpha.to_string());
    inputs.insert("N".to_string(), n_max.to_string());
    let (mut tail, mut verdict) = extrapolate(&idx, &summand);
    let mut notes = Vec::new();
    // L(n) = c log^β n for large n
    let power = match l.family() {
        Family::Constant(c) => Some((0.0, c)),
        Family::OneVeeLog => Some((1.0, 1.0)),
        Family::LogPower(b) => Some((b, 1.0)),
        Family::IteratedLogPower(_) => None,
    };
    if let Some((beta, scale)) = power {
        let q = beta - alpha;
        let ln_n = (n_max as f64).ln();
        // the closed form holds once log^β n ≥ 1 and the summand decreases
        if ln_n >= 1.0 && ln_n > -q.min(0.0) {
            if q > 1.0 {
                tail.tail_bound = Some(ln_n.powf(1.0 - q) / ((q - 1.0) * scale));
                verdict = Verdict::ConvergesCertified;
                notes.push(format!("β − α = {q} > 1: tail ≤ ∫_N^∞ dx/(x log^{q} x)"));
            } else {
                verdict = Verdict::DivergesCertified;
                notes.push(format!("β − α = {q} ≤ 1: ∫^∞ dx/(x log^{q} x) diverges"));
            }
        }
    }
    Ok(ConditionReport {
        condition: ConditionId::LIN21,
        inputs,
        partial_sums: cumulative(2..=n_max, &summand),
        tail_model: tail,
        verdict,
        notes,
    })
}

/// (log log(1/d))^p for d < 1/e, clamped to its value 0 at d = 1/e beyond.
fn energy_weight(d: f64, p: f64) -> f64 {
    let inner = (1.0 / d).ln();
    if inner <= 1.0 {
        0.0
    } else {
        inner.ln().powf(p)
    }
}

/// ∫_0^{1−d} [g(x + d) − g(x)]² dx in closed form.
fn increment_energy(g: &DyadicFunctional, d: f64) -> f64 {
    match *g {
        DyadicFunctional::Affine { slope } => slope * slope * d * d * (1.0 - d),
        // the increment is ±1 exactly when x < τ ≤ x + d
        DyadicFunctional::Indicator { tau } => (tau.min(1.0 - d) - (tau - d).max(0.0)).max(0.0),
    }
}

/// The double integral of [g(x) − g(y)]²/|x − y| · log^{5/2+δ}(log(1/|x − y|))
/// split into strips |x − y| ∈ [2^{−(m+1)}, 2^{−m}], m = 1..=level.
pub fn bernoulli_energy(g: &DyadicFunctional, delta: f64, level: u32) -> Result<ConditionReport> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!("δ must be positive, got {delta}")));
    }
    if level == 0 || level > 1000 {
        return Err(Error::InvalidInput("quadrature level must be in 1..=1000".into()));
    }
    let p = 2.5 + delta;
    let rule = GaussRule::legendre(32);
    let mut strips = Vec::with_capacity(level as usize);
    for m in 1..=level {
        let (a, b) = (2f64.powi(-(m as i32) - 1), 2f64.powi(-(m as i32)));
        // both orders x < y and y < x
        let s = 2.0 * rule.integrate(a, b, |d| energy_weight(d, p) / d * increment_energy(g, d));
        strips.push(s);
    }
    // beyond the last strip: ∫_a^b w(d)/d · E(d) dd ≤ (b − a) w(a) L with
    // E(d) ≤ L d (jump functions: L = 1, affine: L = slope², using d(1−d)·d ≤ d²)
    let (lip, kind) = match *g {
        DyadicFunctional::Affine { slope } => (slope * slope, "Lipschitz"),
        DyadicFunctional::Indicator { .. } => (1.0, "single-jump"),
    };
    let strip_bound = |m: u32| -> f64 {
        let (a, b) = (2f64.powi(-(m as i32) - 1), 2f64.powi(-(m as i32)));
        let scale = match *g {
            DyadicFunctional::Affine { .. } => b,
            DyadicFunctional::Indicator { .. } => 1.0,
        };
        2.0 * lip * scale * (b - a) * energy_weight(a, p)
    };
    // successive bounds shrink by at most ρ once the log-log factor is flat
    let m0 = level + 1;
    let ratio = strip_bound(m0 + 1) / strip_bound(m0).max(f64::MIN_POSITIVE);
    let tail_bound = if lip == 0.0 {
        Some(0.0)
    } else if ratio < 0.75 {
        // the ratio of consecutive bounds decreases in m, so a geometric tail
        Some(strip_bound(m0) / (1.0 - ratio))
    } else {
        None
    };
    let mut inputs = BTreeMap::new();
    inputs.insert("g".to_string(), format!("{g:?}"));
    inputs.insert("delta".to_string(), delta.to_string());
    inputs.insert("quadrature_level".to_string(), level.to_string());
    let idx: Vec<f64> = (1..=level).map(|m| 2f64.powi(m as i32)).collect();
    let (mut tail, mut verdict) = extrapolate(&idx, &strips);
    tail.description = format!("strip sums over |x − y| ∈ [2^-(m+1), 2^-m]; {}", tail.description);
    if let Some(tb) = tail_bound {
        tail.tail_bound = Some(tb);
        verdict = Verdict::ConvergesCertified;
    }
    Ok(ConditionReport {
        condition: ConditionId::BSHIFT22,
        inputs,
        partial_sums: cumulative(1..=level as u64, &strips),
        tail_model: tail,
        verdict,
        notes: vec![
            "weight clamped to its value 0 at |x − y| = 1/e for |x − y| ≥ 1/e".into(),
            format!("strip tail bound from the {kind} increment estimate"),
        ],
    })
}

/// Weight h(x) = (1 ∨ log x)^exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HWeight {
    pub exponent: f64,
}

impl HWeight {
    pub fn eval(&self, x: f64) -> f64 {
        x.ln().max(1.0).powf(self.exponent)
    }
}

impl Default for HWeight {
    fn default() -> Self {
        Self { exponent: 1.5 }
    }
}

/// Check v_{m+n} ≤ v_m + v_n for all m ≤ n ≤ 200 with m + n ≤ N and on
/// the dyadic pairs.
pub fn check_subadditive(v: &[f64], tol: f64) -> Result<()> {
    let n = v.len();
    let at = |k: usize| v[k - 1];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for a in 1..=200.min(n) {
        for b in a..=200.min(n) {
            if a + b <= n {
                pairs.push((a, b));
            }
        }
    }
    let mut p = 1;
    while 2 * p <= n {
        for q in [1, p / 2, p] {
            if q >= 1 && p + q <= n {
                pairs.push((q, p));
            }
        }
        p *= 2;
    }
    for (a, b) in pairs {
        if at(a + b) > at(a) + at(b) + tol {
            return Err(Error::Certification(format!(
                "v is not subadditive: v_{} = {} > v_{a} + v_{b} = {}",
                a + b,
                at(a + b),
                at(a) + at(b)
            )));
        }
    }
    Ok(())
}

/// Σ_r h(2^r) v_{2^r} 2^{−r/2} from v_dyadic[r] = v_{2^r}, r = 0..R.
///
/// When the full sequence is supplied its subadditivity is checked first.
/// Each n in [2^r, 2^{r+1}) is a sum of distinct powers 2^i with i ≤ r, so
/// subadditivity gives v_n ≤ V_r = Σ_{i≤r} v_{2^i}; the report's notes carry
/// the resulting majorant Σ_r h(2^{r+1}) V_r 2^{−r/2} of Σ h(n) v_n n^{−3/2}.
pub fn dyadic_check(
    v_dyadic: &[f64],
    h: HWeight,
    full_v: Option<&[f64]>,
    bound: Option<f64>,
) -> Result<ConditionReport> {
    if v_dyadic.len() < 3 {
        return Err(Error::InvalidInput("need v_{2^r} for at least r = 0, 1, 2".into()));
    }
    if v_dyadic.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidInput("v must be finite and nonnegative".into()));
    }
    if let Some(v) = full_v {
        check_subadditive(v, 1e-10)?;
    }
    let terms: Vec<f64> = v_dyadic
        .iter()
        .enumerate()
        .map(|(r, v)| h.eval(2f64.powi(r as i32)) * v * 2f64.powf(-(r as f64) / 2.0))
        .collect();
    let r_max = v_dyadic.len() - 1;
    // fit in r over the upper half, r ≥ 2
    let lo = (r_max / 2).max(2);
    let idx: Vec<f64> = (lo..=r_max).map(|r| r as f64).collect();
    let (mut tail, mut verdict) = extrapolate_in_r(&idx, &terms[lo..]);
    let mut notes = Vec::new();
    if let Some(c) = bound {
        // Σ_{r>R} h(2^r) C 2^{−r/2}, term ratio ≤ ρ = ((R+2)/(R+1))^a 2^{−1/2}
        let r0 = r_max as f64 + 1.0;
        let first = h.eval(2f64.powf(r0)) * c * 2f64.powf(-r0 / 2.0);
        let rho = ((r0 + 1.0) / r0).powf(h.exponent.max(0.0)) * 0.5f64.sqrt();
        if rho < 1.0 {
            tail.tail_bound = Some(first / (1.0 - rho));
            verdict = Verdict::ConvergesCertified;
            notes.push(format!(
                "tail bounded with v ≤ {c} by a geometric series of ratio {rho:.4}"
            ));
        }
    }
    let mut v_cum = 0.0;
    let mut majorant = CompensatedSum::new();
    for (r, v) in v_dyadic.iter().enumerate() {
        v_cum += v;
        majorant.add(h.eval(2f64.powi(r as i32 + 1)) * v_cum * 2f64.powf(-(r as f64) / 2.0));
    }
    notes.push(format!(
        "subadditive majorant Σ_r h(2^(r+1)) V_r 2^(-r/2) of Σ h(n) v_n n^(-3/2) up to n < 2^{}: {}",
        r_max + 1,
        majorant.value()
    ));
    let mut inputs = BTreeMap::new();
    inputs.insert("h_exponent".to_string(), h.exponent.to_string());
    inputs.insert("R".to_string(), r_max.to_string());
    inputs.insert("subadditivity_checked".to_string(), full_v.is_some().to_string());
    Ok(ConditionReport {
        condition: ConditionId::DYADIC,
        inputs,
        partial_sums: cumulative(0..=r_max as u64, &terms),
        tail_model: tail,
        verdict,
        notes,
    })
}

/// Power-law fit in r over the supplied window; geometric decay of the
/// last terms also counts as convergent.
fn extrapolate_in_r(idx: &[f64], terms: &[f64]) -> (TailModel, Verdict) {
    let window: Vec<(f64, f64)> = idx.iter().copied().zip(terms.iter().copied()).collect();
    let (mut tail, verdict) = decide(&window, terms.iter().all(|&a| a == 0.0));
    if verdict != Verdict::ConvergesExtrapolated && terms.len() >= 3 {
        let k = terms.len();
        let (a, b, c) = (terms[k - 3], terms[k - 2], terms[k - 1]);
        if a > 0.0 && b / a < 0.9 && c / b < 0.9 {
            tail.description = format!("terms decay geometrically (ratio {:.4})", c / b);
            tail.tail_estimate = Some(c * (c / b) / (1.0 - c / b));
            return (tail, Verdict::ConvergesExtrapolated);
        }
    }
    (tail, verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(s: &str) -> ProcessModel {
        s.parse().unwrap()
    }

    #[test]
    fn exact_norms_on_reference_models() {
        let v = cond_norm_seq(&model("iid:normal"), 50, NormMode::Exact, None).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert_eq!(v.uniform_bound, Some(0.0));
        let v = cond_norm_seq(&model("ma:1,1"), 50, NormMode::Exact, None).unwrap();
        assert!(v.values.iter().all(|&x| x == 1.0));
        let v = cond_norm_seq(&model("chain2:p=0.25,q=0.25"), 60, NormMode::Exact, None).unwrap();
        for (i, x) in v.values.iter().enumerate() {
            assert!((x - (1.0 - 0.5f64.powi(i as i32 + 1))).abs() <= 1e-12);
        }
        let b = cond_norm_seq(&model("bshift:affine"), 10, NormMode::Exact, None).unwrap();
        let i = cond_norm_seq(&model("bshift:indicator:0.5"), 10, NormMode::Exact, None).unwrap();
        assert!((b.get(3) - 0.875 / 12f64.sqrt()).abs() < 1e-15);
        // τ = 1/2 makes g depend on the newest bit only
        assert!(i.values.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn mw_verdicts() {
        let ones = vec![1.0; 10_000];
        let (r2, r5) = mw_series_from(&ones, Some(1.0), SlowlyVaryingSpec::one_vee_log(), "1").unwrap();
        assert_eq!(r2.verdict, Verdict::ConvergesCertified);
        assert_eq!(r5.verdict, Verdict::ConvergesCertified);
        assert!(r5.tail_model.tail_bound.unwrap() > 0.0);
        let roots: Vec<f64> = (1..=10_000).map(|n| (n as f64).sqrt()).collect();
        let (r2, _) = mw_series_from(&roots, None, SlowlyVaryingSpec::one(), "sqrt").unwrap();
        assert_eq!(r2.verdict, Verdict::DivergesExtrapolated);
        let (r2, _) = mw_series_from(&ones, None, SlowlyVaryingSpec::one(), "1").unwrap();
        assert_eq!(r2.verdict, Verdict::ConvergesExtrapolated);
        assert!((r2.tail_model.exponent.unwrap() + 1.5).abs() < 1e-9);
    }

    #[test]
    fn lin21_threshold() {
        let verdict = |b: f64| {
            linear_criterion(SlowlyVaryingSpec::log_power(b).unwrap(), 1.5, 10_000)
                .unwrap()
                .verdict
        };
        assert_eq!(verdict(2.0), Verdict::DivergesCertified);
        assert_eq!(verdict(2.4), Verdict::DivergesCertified);
        assert_eq!(verdict(2.5), Verdict::DivergesCertified);
        assert_eq!(verdict(2.6), Verdict::ConvergesCertified);
        assert_eq!(verdict(3.0), Verdict::ConvergesCertified);
        let harmonic = linear_criterion(SlowlyVaryingSpec::one(), 0.0, 1000).unwrap();
        assert!(!harmonic.verdict.converges());
    }

    #[test]
    fn energy_integral() {
        let zero = bernoulli_energy(&DyadicFunctional::Affine { slope: 0.0 }, 0.1, 20).unwrap();
        assert_eq!(zero.total(), 0.0);
        let one = bernoulli_energy(&DyadicFunctional::Affine { slope: 1.0 }, 0.1, 30).unwrap();
        let two = bernoulli_energy(&DyadicFunctional::Affine { slope: 2.0 }, 0.1, 30).unwrap();
        assert!((two.total() - 4.0 * one.total()).abs() < 1e-12 * two.total());
        assert_eq!(one.verdict, Verdict::ConvergesCertified);
        let s: Vec<f64> = one.partial_sums.windows(2).map(|w| w[1].1 - w[0].1).collect();
        // strips decay roughly like 4^{-m}
        assert!(s[20] / s[19] < 0.3);
        let ind = bernoulli_energy(&DyadicFunctional::Indicator { tau: 1.0 / 3.0 }, 0.1, 40).unwrap();
        assert_eq!(ind.verdict, Verdict::ConvergesCertified);
    }

    #[test]
    fn dyadic_threshold() {
        let synth = |gamma: f64| -> Vec<f64> {
            (0..=60)
                .map(|r| 2f64.powf(r as f64 / 2.0) / (r.max(1) as f64).powf(gamma))
                .collect()
        };
        for (g, conv) in [(2.0, false), (2.4, false), (2.5, false), (2.6, true), (3.0, true)] {
            let rep = dyadic_check(&synth(g), HWeight::default(), None, None).unwrap();
            assert_eq!(rep.verdict.converges(), conv, "γ = {g}: {:?}", rep.tail_model);
        }
        let ones = vec![1.0; 40];
        let rep = dyadic_check(&ones, HWeight::default(), None, Some(1.0)).unwrap();
        assert_eq!(rep.verdict, Verdict::ConvergesCertified);
        let bad: Vec<f64> = (1..=100).map(|n| (n * n) as f64).collect();
        assert!(dyadic_check(&ones, HWeight::default(), Some(&bad), None).is_err());
    }

    #[test]
    fn chain_norms_are_subadditive() {
        let v = cond_norm_seq(&model("chain:P=0.5,0.5/0.25,0.75;g=2,-1"), 400, NormMode::Exact, None).unwrap();
        check_subadditive(&v.values, 1e-10).unwrap();
    }
}
