//! Stationary models X_k = g(W_k) driven by a Markov chain (W_k).
//!
//! Four families are supported, each with its state space, functional g,
//! transfer operator Qf(w) = E[f(W_1) | W_0 = w] and stationary law:
//!
//! * i.i.d. innovations, W_k = ε_k;
//! * linear processes X_k = Σ_j a_j ε_{k−j}, W_k = (ε_k, ε_{k−1}, …);
//! * finite Markov chains with a centered g;
//! * the Bernoulli shift W_{k+1} = (W_k + ε_{k+1})/2 with fair bits.
//!
//! Models are written as short strings, e.g. `iid:normal`, `ma:1,1`,
//! `geom:kappa=0.5@rademacher`, `linear:kappa=1,L=log_pow:3`,
//! `chain2:p=0.25,q=0.25`, `chain:P=0.5,0.5/0.25,0.75;g=2,-1`,
//! `bshift:affine`, `bshift:indicator:0.25` and `zero`.

mod sampler;
mod state_fn;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

pub use sampler::{
    sample_path, sample_path_with, write_path_csv, PathSample, Sampler, StartState, StateRef, StateTrace,
};
pub use state_fn::{apply_q, exact_cond_sn, StateFn};

use crate::{Error, Result, SlowlyVaryingSpec};

/// Work units (roughly, multiply-adds) a single `sample_path` may spend.
pub const DEFAULT_WORK_BUDGET: u64 = 1 << 34;
/// Largest truncation length chosen automatically for linear processes.
pub const MAX_AUTO_TRUNCATION: usize = 1 << 22;
/// Relative L² tail allowed for a truncated linear filter.
pub const TRUNCATION_TARGET: f64 = 1e-16;
/// A filter whose certified relative tail exceeds this is rejected.
pub const TRUNCATION_LIMIT: f64 = 1e-6;
/// Fresh bits drawn for a Bernoulli-shift initial state.
pub const WARMUP_BITS: u32 = 64;

/// Law of the (unit-variance, centered) innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Innovation {
    Normal,
    Rademacher,
    /// Uniform on [−√3, √3].
    Uniform,
    /// ε_k = ξ_k (2 + ξ_{k−1})/√5 with Rademacher ξ: a martingale
    /// difference sequence that is not independent.
    Mds,
}

impl Innovation {
    fn name(&self) -> &'static str {
        match self {
            Innovation::Normal => "normal",
            Innovation::Rademacher => "rademacher",
            Innovation::Uniform => "uniform",
            Innovation::Mds => "mds",
        }
    }
}

impl FromStr for Innovation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "normal" => Ok(Innovation::Normal),
            "rademacher" => Ok(Innovation::Rademacher),
            "uniform" => Ok(Innovation::Uniform),
            "mds" => Ok(Innovation::Mds),
            other => Err(Error::Parse(format!(
                "unknown innovation law '{other}' (expected normal, rademacher, uniform or mds)"
            ))),
        }
    }
}

/// How the filter a_0, a_1, … is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientRule {
    Finite(Vec<f64>),
    /// a_j = κ^{j+1}
    Geometric {
        kappa: f64,
    },
    /// a_j = κ / (max(j, 1) L(max(j, 1)))
    SlowlyVarying {
        kappa: f64,
        ell: SlowlyVaryingSpec,
    },
}

/// A truncated linear process X_k = Σ_{j≤J} a_j ε_{k−j}.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProcess {
    pub rule: CoefficientRule,
    pub innovation: Innovation,
    /// a_0..a_J
    pub coeffs: Vec<f64>,
    /// Certified upper bound on Σ_{j>J} a_j² / Σ_j a_j².
    pub tail_ratio: f64,
    /// Explicit truncation requested in the model string, if any.
    pub truncation: Option<usize>,
}

impl LinearProcess {
    pub fn new(rule: CoefficientRule, innovation: Innovation, truncation: Option<usize>) -> Result<Self> {
        let (coeffs, tail_ratio) = match &rule {
            CoefficientRule::Finite(a) => {
                if a.is_empty() || a.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidSpec("finite filter needs finite coefficients".into()));
                }
                if a.iter().all(|&x| x == 0.0) {
                    return Err(Error::InvalidSpec("finite filter is identically zero".into()));
                }
                let mut a = a.clone();
                if let Some(j) = truncation {
                    a.truncate(j + 1);
                }
                (a, 0.0)
            }
            CoefficientRule::Geometric { kappa } => {
                let k = *kappa;
                if !(k.is_finite() && k != 0.0 && k.abs() < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "geometric filter needs 0 < |κ| < 1, got {k}"
                    )));
                }
                // Σ_{j>J} a_j² / Σ a_j² = κ^{2(J+1)}
                let auto = (TRUNCATION_TARGET.ln() / (2.0 * k.abs().ln())).ceil() as usize;
                let j_max = truncation.unwrap_or(auto.saturating_sub(1));
                let a: Vec<f64> = (0..=j_max).map(|j| k.powi(j as i32 + 1)).collect();
                (a, k.abs().powi(2 * (j_max as i32 + 1)))
            }
            CoefficientRule::SlowlyVarying { kappa, ell } => {
                let k = *kappa;
                if !(k.is_finite() && k != 0.0) {
                    return Err(Error::InvalidSpec(format!("κ must be finite and nonzero, got {k}")));
                }
                let coeff = |j: usize| {
                    let m = j.max(1) as f64;
                    k / (m * ell.eval_real(m))
                };
                let mut energy = crate::numeric::CompensatedSum::new();
                let mut a = Vec::new();
                let cap = truncation.unwrap_or(MAX_AUTO_TRUNCATION);
                let mut ratio = f64::INFINITY;
                for j in 0..=cap {
                    let c = coeff(j);
                    a.push(c);
                    energy.add(c * c);
                    // Σ_{i>j} a_i² ≤ κ² ∫_j^∞ dx/(x² L(x)²) ≤ κ²/(j L(j)²) for nondecreasing L
                    if j >= 1 && (j.is_power_of_two() || j == cap) {
                        let l = ell.eval_real(j as f64);
                        ratio = k * k / (j as f64 * l * l) / energy.value();
                        if truncation.is_none() && ratio <= TRUNCATION_TARGET {
                            break;
                        }
                    }
                }
                (a, ratio)
            }
        };
        if tail_ratio > TRUNCATION_LIMIT {
            return Err(Error::InvalidSpec(format!(
                "truncated filter keeps a relative L² tail of {tail_ratio:e} (limit {TRUNCATION_LIMIT:e}); raise J"
            )));
        }
        Ok(Self {
            rule,
            innovation,
            coeffs,
            tail_ratio,
            truncation,
        })
    }

    /// J, the index of the last retained coefficient.
    pub fn truncation_length(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// Finite, irreducible, aperiodic chain with a centered functional.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    /// Row-major transition matrix.
    pub p: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub pi: Vec<f64>,
    /// (p, q) when built by [`FiniteChain::two_state`].
    two_state: Option<(f64, f64)>,
    row_thresholds: Vec<Vec<u64>>,
    pi_thresholds: Vec<u64>,
}

impl FiniteChain {
    pub fn new(p: Vec<Vec<f64>>, g: Vec<f64>) -> Result<Self> {
        let m = p.len();
        if m < 2 {
            return Err(Error::InvalidSpec("a chain needs at least two states".into()));
        }
        if g.len() != m || p.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidSpec(format!(
                "P must be {m}×{m} and g must have {m} entries"
            )));
        }
        for (i, row) in p.iter().enumerate() {
            if row.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
                return Err(Error::InvalidSpec(format!(
                    "row {i} of P has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!("row {i} of P sums to {s}, not 1")));
            }
        }
        if !is_primitive(&p) {
            return Err(Error::InvalidSpec("chain is not irreducible and aperiodic".into()));
        }
        let pi = stationary_distribution(&p)?;
        for j in 0..m {
            let s: f64 = (0..m).map(|i| pi[i] * p[i][j]).sum();
            if (s - pi[j]).abs() > 1e-10 {
                return Err(Error::InvalidSpec("could not solve πP = π to 1e-10".into()));
            }
        }
        let mean: f64 = pi.iter().zip(&g).map(|(a, b)| a * b).sum();
        if mean.abs() > 1e-10 {
            return Err(Error::InvalidSpec(format!("g is not centered under π (mean {mean:e})")));
        }
        let row_thresholds = p.iter().map(|r| cumulative_thresholds(r)).collect();
        let pi_thresholds = cumulative_thresholds(&pi);
        Ok(Self {
            p,
            g,
            pi,
            two_state: None,
            row_thresholds,
            pi_thresholds,
        })
    }

    /// P = [[1 − p, p], [q, 1 − q]] with g = (√(π₁/π₀), −√(π₀/π₁)), which
    /// is centered with unit variance.
    pub fn two_state(p: f64, q: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidSpec(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        let pi0 = q / (p + q);
        let pi1 = p / (p + q);
        let g = vec![(pi1 / pi0).sqrt(), -(pi0 / pi1).sqrt()];
        let mut chain = Self::new(vec![vec![1.0 - p, p], vec![q, 1.0 - q]], g)?;
        chain.pi = vec![pi0, pi1];
        chain.pi_thresholds = cumulative_thresholds(&chain.pi);
        chain.two_state = Some((p, q));
        Ok(chain)
    }

    pub fn states(&self) -> usize {
        self.p.len()
    }

    /// (P v)(i) = Σ_j P(i, j) v(j).
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.p
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Σ_i π_i f(i)².
    pub fn second_moment(&self, f: &[f64]) -> f64 {
        self.pi.iter().zip(f).map(|(p, x)| p * x * x).sum()
    }

    pub(crate) fn next_state(&self, from: usize, r: u64) -> usize {
        pick(&self.row_thresholds[from], r)
    }

    pub(crate) fn draw_stationary(&self, r: u64) -> usize {
        pick(&self.pi_thresholds, r)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let m = self.states();
        DMatrix::from_fn(m, m, |i, j| self.p[i][j])
    }
}

fn cumulative_thresholds(probs: &[f64]) -> Vec<u64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(probs.len());
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if i + 1 == probs.len() {
            out.push(u64::MAX);
        } else {
            out.push((acc.min(1.0) * 18_446_744_073_709_551_616.0).min(u64::MAX as f64) as u64);
        }
    }
    out
}

#[inline]
fn pick(thresholds: &[u64], r: u64) -> usize {
    thresholds.iter().position(|&t| r < t).unwrap_or(thresholds.len() - 1)
}

/// Primitive iff some power has all entries positive; (m − 1)² + 1 suffices.
fn is_primitive(p: &[Vec<f64>]) -> bool {
    let m = p.len();
    let adj: Vec<Vec<bool>> = p.iter().map(|r| r.iter().map(|&x| x > 0.0).collect()).collect();
    let mul = |a: &Vec<Vec<bool>>, b: &Vec<Vec<bool>>| -> Vec<Vec<bool>> {
        (0..m)
            .map(|i| (0..m).map(|j| (0..m).any(|k| a[i][k] && b[k][j])).collect())
            .collect()
    };
    let mut e = (m - 1) * (m - 1) + 1;
    let mut base = adj;
    let mut acc: Option<Vec<Vec<bool>>> = None;
    while e > 0 {
        if e & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => mul(&a, &base),
            });
        }
        e >>= 1;
        if e > 0 {
            base = mul(&base, &base);
        }
    }
    acc.map(|a| a.iter().all(|r| r.iter().all(|&x| x))).unwrap_or(false)
}

fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = p.len();
    // (Pᵀ − I) π = 0 with the last equation replaced by Σ π = 1
    let mut a = DMatrix::from_fn(m, m, |i, j| p[j][i] - if i == j { 1.0 } else { 0.0 });
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(m);
    b[m - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidSpec("stationary distribution is not unique".into()))?;
    Ok(pi.iter().copied().collect())
}

/// Functionals of the Bernoulli-shift state w ∈ [0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DyadicFunctional {
    /// slope · (w − 1/2)
    Affine { slope: f64 },
    /// 1{w < τ} − τ
    Indicator { tau: f64 },
}

/// W_{k+1} = (W_k + ε_{k+1})/2 with fair bits ε, X_k = g(W_k).
///
/// States are held exactly as 64-bit binary fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliShift {
    pub functional: DyadicFunctional,
}

impl BernoulliShift {
    pub fn new(functional: DyadicFunctional) -> Result<Self> {
        match functional {
            DyadicFunctional::Affine { slope } if !slope.is_finite() => {
                Err(Error::InvalidSpec(format!("slope must be finite, got {slope}")))
            }
            DyadicFunctional::Indicator { tau } if !(tau > 0.0 && tau < 1.0) => {
                Err(Error::InvalidSpec(format!("τ must lie in (0, 1), got {tau}")))
            }
            _ => Ok(Self { functional }),
        }
    }
}

impl DyadicFunctional {
    /// Indicator threshold as a 64-bit binary fraction.
    fn threshold(tau: f64) -> u128 {
        (tau * 18_446_744_073_709_551_616.0) as u128
    }

    /// g(w) for w = bits / 2⁶⁴.
    #[inline]
    pub fn eval_bits(&self, bits: u64) -> f64 {
        match *self {
            DyadicFunctional::Affine { slope } => slope * (bits_to_unit(bits) - 0.5),
            DyadicFunctional::Indicator { tau } => {
                if (bits as u128) < Self::threshold(tau) {
                    1.0 - tau
                } else {
                    -tau
                }
            }
        }
    }

    /// (Q^k g)(w) for w = bits / 2⁶⁴.
    pub fn q_power_bits(&self, k: u32, bits: u64) -> f64 {
        match *self {
            DyadicFunctional::Affine { slope } => slope * (bits_to_unit(bits) - 0.5) * 0.5f64.powi(k as i32),
            DyadicFunctional::Indicator { tau } => {
                if k == 0 {
                    return self.eval_bits(bits);
                }
                if k >= 64 {
                    return self.q_power_real(k, bits_to_unit(bits));
                }
                // #{0 ≤ j < 2^k : w + j < τ 2^k}, all in units of 2^-64
                let lhs = Self::threshold(tau) << k;
                let count = if lhs <= bits as u128 {
                    0u128
                } else {
                    (lhs - bits as u128).div_ceil(1u128 << 64).min(1u128 << k)
                };
                count as f64 * 0.5f64.powi(k as i32) - tau
            }
        }
    }

    /// (Q^k g)(w) for real w ∈ [0, 1).
    pub fn q_power_real(&self, k: u32, w: f64) -> f64 {
        let scale = 2f64.powi(k as i32);
        match *self {
            DyadicFunctional::Affine { slope } => slope * (w - 0.5) / scale,
            DyadicFunctional::Indicator { tau } => {
                let count = (tau * scale - w).ceil().clamp(0.0, scale);
                count / scale - tau
            }
        }
    }

    /// Points in (0, 1) where Q^k g jumps.
    pub fn breakpoint(&self, k: u32) -> Option<f64> {
        match *self {
            DyadicFunctional::Affine { .. } => None,
            DyadicFunctional::Indicator { tau } => {
                let x = tau * 2f64.powi(k as i32);
                let f = x - x.floor();
                (f > 0.0).then_some(f)
            }
        }
    }

    /// sup_w |Q^k g(w)| ≤ bound · 2^{−k}.
    pub fn decay_constant(&self) -> f64 {
        match *self {
            DyadicFunctional::Affine { slope } => 0.5 * slope.abs(),
            DyadicFunctional::Indicator { .. } => 1.0,
        }
    }
}

#[inline]
pub(crate) fn bits_to_unit(bits: u64) -> f64 {
    bits as f64 * (1.0 / 18_446_744_073_709_551_616.0)
}

/// A stationary model.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessModel {
    /// X ≡ 0.
    Zero,
    Iid(Innovation),
    Linear(LinearProcess),
    Chain(FiniteChain),
    BernoulliShift(BernoulliShift),
}

impl ProcessModel {
    /// Work units per sampled step.
    pub fn step_cost(&self) -> u64 {
        match self {
            ProcessModel::Linear(l) => l.coeffs.len() as u64 + 1,
            ProcessModel::Chain(c) => c.states() as u64,
            _ => 1,
        }
    }

    /// Whether W_0 can be fixed for conditional sampling.
    pub fn supports_conditioning(&self) -> bool {
        matches!(
            self,
            ProcessModel::Chain(_) | ProcessModel::BernoulliShift(_) | ProcessModel::Zero
        )
    }

    /// Filter coefficients for the i.i.d. and linear families.
    pub(crate) fn filter(&self) -> Option<&[f64]> {
        const IDENTITY: [f64; 1] = [1.0];
        match self {
            ProcessModel::Iid(_) => Some(&IDENTITY),
            ProcessModel::Linear(l) => Some(&l.coeffs),
            _ => None,
        }
    }

    pub(crate) fn innovation(&self) -> Option<Innovation> {
        match self {
            ProcessModel::Iid(i) => Some(*i),
            ProcessModel::Linear(l) => Some(l.innovation),
            _ => None,
        }
    }

    /// σ² = lim E S_n²/n where a closed form is available.
    pub fn analytic_sigma2(&self) -> Option<f64> {
        match self {
            ProcessModel::Zero => Some(0.0),
            ProcessModel::Iid(_) => Some(1.0),
            ProcessModel::Linear(l) => {
                let s: f64 = l.coeffs.iter().sum();
                Some(s * s)
            }
            ProcessModel::Chain(c) => {
                // σ² = 2⟨g, Zg⟩_π − ⟨g, g⟩_π with Z = (I − P + Π)⁻¹
                let m = c.states();
                let z = DMatrix::from_fn(m, m, |i, j| (if i == j { 1.0 } else { 0.0 }) - c.p[i][j] + c.pi[j]);
                let zg = z.lu().solve(&DVector::from_vec(c.g.clone()))?;
                let cross: f64 = (0..m).map(|i| c.pi[i] * c.g[i] * zg[i]).sum();
                Some(2.0 * cross - c.second_moment(&c.g))
            }
            ProcessModel::BernoulliShift(b) => match b.functional {
                DyadicFunctional::Affine { slope } => Some(slope * slope / 4.0),
                DyadicFunctional::Indicator { .. } => {
                    // E g² + 2 Σ_{k≥1} E[g Q^k g]; the terms are O(2^{-k})
                    let g = StateFn::Dyadic {
                        functional: b.functional,
                        terms: vec![1.0],
                    };
                    let mut s = g.inner_product(&g, self).ok()?;
                    for k in 1..=60u32 {
                        let mut terms = vec![0.0; k as usize + 1];
                        terms[k as usize] = 1.0;
                        let qk = StateFn::Dyadic {
                            functional: b.functional,
                            terms,
                        };
                        s += 2.0 * g.inner_product(&qk, self).ok()?;
                    }
                    Some(s)
                }
            },
        }
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("{key}: '{s}' is not a number")))
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|x| parse_f64(key, x)).collect()
}

/// Splits `a=1,b=x:y` into pairs; values may contain ':'.
fn parse_pairs(s: &str) -> Result<Vec<(String, String)>> {
    s.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got '{kv}'")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn take(pairs: &mut Vec<(String, String)>, key: &str) -> Option<String> {
    let i = pairs.iter().position(|(k, _)| k == key)?;
    Some(pairs.remove(i).1)
}

fn no_leftovers(kind: &str, pairs: &[(String, String)]) -> Result<()> {
    if let Some((k, _)) = pairs.first() {
        return Err(Error::Parse(format!("{kind}: unknown parameter '{k}'")));
    }
    Ok(())
}

impl FromStr for ProcessModel {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (body, innovation) = match text.rsplit_once('@') {
            Some((b, i)) => (b, Some(i.parse::<Innovation>()?)),
            None => (text, None),
        };
        let (kind, args) = body.split_once(':').unwrap_or((body, ""));
        let innov = innovation.unwrap_or(Innovation::Normal);
        let no_innovation = |kind: &str| -> Result<()> {
            match innovation {
                Some(_) => Err(Error::Parse(format!("{kind} takes no '@innovation' suffix"))),
                None => Ok(()),
            }
        };
        match kind.trim() {
            "zero" => {
                no_innovation("zero")?;
                if !args.is_empty() {
                    return Err(Error::Parse("zero takes no parameters".into()));
                }
                Ok(ProcessModel::Zero)
            }
            "iid" => {
                no_innovation("iid")?;
                Ok(ProcessModel::Iid(args.parse()?))
            }
            "ma" => {
                let a = parse_list("ma", args)?;
                Ok(ProcessModel::Linear(LinearProcess::new(
                    CoefficientRule::Finite(a),
                    innov,
                    None,
                )?))
            }
            "geom" => {
                let mut pairs = parse_pairs(args)?;
                let kappa = parse_f64("kappa", &take(&mut pairs, "kappa").unwrap_or_else(|| "0.5".into()))?;
                let j = take(&mut pairs, "J").map(|v| parse_truncation(&v)).transpose()?;
                no_leftovers("geom", &pairs)?;
                Ok(ProcessModel::Linear(LinearProcess::new(
                    CoefficientRule::Geometric { kappa },
                    innov,
                    j,
                )?))
            }
            "linear" => {
                let mut pairs = parse_pairs(args)?;
                let kappa = parse_f64("kappa", &take(&mut pairs, "kappa").unwrap_or_else(|| "1".into()))?;
                let ell: SlowlyVaryingSpec = take(&mut pairs, "L")
                    .ok_or_else(|| Error::Parse("linear: missing L=<slowly varying spec>".into()))?
                    .parse()?;
                let j = take(&mut pairs, "J").map(|v| parse_truncation(&v)).transpose()?;
                no_leftovers("linear", &pairs)?;
                Ok(ProcessModel::Linear(LinearProcess::new(
                    CoefficientRule::SlowlyVarying { kappa, ell },
                    innov,
                    j,
                )?))
            }
            "chain2" => {
                no_innovation("chain2")?;
                let mut pairs = parse_pairs(args)?;
                let p = parse_f64(
                    "p",
                    &take(&mut pairs, "p").ok_or_else(|| Error::Parse("chain2: missing p".into()))?,
                )?;
                let q = parse_f64(
                    "q",
                    &take(&mut pairs, "q").ok_or_else(|| Error::Parse("chain2: missing q".into()))?,
                )?;
                no_leftovers("chain2", &pairs)?;
                Ok(ProcessModel::Chain(FiniteChain::two_state(p, q)?))
            }
            "chain" => {
                no_innovation("chain")?;
                let mut p_rows = None;
                let mut g = None;
                for part in args.split(';') {
                    let (k, v) = part
                        .split_once('=')
                        .ok_or_else(|| Error::Parse(format!("chain: expected key=value, got '{part}'")))?;
                    match k.trim() {
                        "P" => p_rows = Some(v.split('/').map(|r| parse_list("P", r)).collect::<Result<Vec<_>>>()?),
                        "g" => g = Some(parse_list("g", v)?),
                        other => return Err(Error::Parse(format!("chain: unknown parameter '{other}'"))),
                    }
                }
                let p = p_rows.ok_or_else(|| Error::Parse("chain: missing P".into()))?;
                let g = g.ok_or_else(|| Error::Parse("chain: missing g".into()))?;
                Ok(ProcessModel::Chain(FiniteChain::new(p, g)?))
            }
            "bshift" => {
                no_innovation("bshift")?;
                let (name, param) = match args.split_once(':') {
                    Some((n, v)) => (n, Some(parse_f64("bshift", v)?)),
                    None => (args, None),
                };
                let functional = match name.trim() {
                    "affine" => DyadicFunctional::Affine {
                        slope: param.unwrap_or(1.0),
                    },
                    // τ = 1/2 would make X_k = ε_k − 1/2 independent
                    "indicator" => DyadicFunctional::Indicator {
                        tau: param.unwrap_or(1.0 / 3.0),
                    },
                    other => {
                        return Err(Error::Parse(format!(
                            "bshift: unknown functional '{other}' (expected affine or indicator)"
                        )))
                    }
                };
                Ok(ProcessModel::BernoulliShift(BernoulliShift::new(functional)?))
            }
            other => Err(Error::Parse(format!(
                "unknown process kind '{other}' (expected zero, iid, ma, geom, linear, chain2, chain or bshift)"
            ))),
        }
    }
}

fn parse_truncation(v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("J: '{v}' is not a nonnegative integer")))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for ProcessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessModel::Zero => write!(f, "zero"),
            ProcessModel::Iid(i) => write!(f, "iid:{}", i.name()),
            ProcessModel::Linear(l) => {
                let j = l.truncation.map(|j| format!(",J={j}")).unwrap_or_default();
                match &l.rule {
                    CoefficientRule::Finite(a) => {
                        let a = match l.truncation {
                            Some(_) => &l.coeffs,
                            None => a,
                        };
                        write!(f, "ma:{}", join(a))?
                    }
                    CoefficientRule::Geometric { kappa } => write!(f, "geom:kappa={kappa}{j}")?,
                    CoefficientRule::SlowlyVarying { kappa, ell } => write!(f, "linear:kappa={kappa},L={ell}{j}")?,
                }
                if l.innovation != Innovation::Normal {
                    write!(f, "@{}", l.innovation.name())?;
                }
                Ok(())
            }
            ProcessModel::Chain(c) => match c.two_state {
                Some((p, q)) => write!(f, "chain2:p={p},q={q}"),
                None => {
                    let rows: Vec<String> = c.p.iter().map(|r| join(r)).collect();
                    write!(f, "chain:P={};g={}", rows.join("/"), join(&c.g))
                }
            },
            ProcessModel::BernoulliShift(b) => match b.functional {
                DyadicFunctional::Affine { slope } => write!(f, "bshift:affine:{slope}"),
                DyadicFunctional::Indicator { tau } => write!(f, "bshift:indicator:{tau}"),
            },
        }
    }
}
