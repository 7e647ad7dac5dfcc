//! The resolvent h_ε, the decomposition S_n = M_n(ε) + R_n(ε) and
//! estimates of σ².
//!
//! For ε > 0 the resolvent solves ((1+ε)I − Q)h = g. Along a path,
//!
//! * M_n(ε) = Σ_{k≤n} H_ε(W_{k−1}, W_k) with H_ε(w₀, w₁) = h(w₁) − Qh(w₀),
//! * R_n(ε) = ε Σ_{k≤n} h(W_k) + Qh(W_0) − Qh(W_n),
//!
//! and S_n = M_n(ε) + R_n(ε) is an algebraic identity.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::numeric::CompensatedSum;
use crate::processes::{
    apply_q, sample_path_with, DyadicFunctional, FiniteChain, PathSample, ProcessModel, Sampler, StateFn, StateRef,
    DEFAULT_WORK_BUDGET,
};
use crate::rng::{StreamKey, StreamRole};
use crate::{Error, Result, SlowlyVaryingSpec};

/// Largest number of series terms a resolvent may use.
pub const MAX_SERIES_TERMS: usize = 10_000_000;
/// Target for the series tail and the solve residual.
pub const RESOLVENT_TOLERANCE: f64 = 1e-12;

/// h_ε together with Qh_ε.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolvent {
    pub model: String,
    /// 0 for the limit Σ_k Q^{k−1} g.
    pub epsilon: f64,
    pub h: StateFn,
    pub qh: StateFn,
    /// Bound on ‖((1+ε)I − Q)h − g‖ (sup norm on chains, L² otherwise).
    pub residual_bound: f64,
    /// Series terms used; 0 for a direct solve.
    pub terms: usize,
    /// Sup-norm bound on the dropped series tail.
    pub truncation_bound: f64,
}

/// (I − P + Π) or ((1+ε)I − P + Π); on centered vectors the Π term vanishes
/// and keeps the system well conditioned as ε → 0.
fn chain_solve(c: &FiniteChain, eps: f64) -> Result<Vec<f64>> {
    let m = c.states();
    let a = DMatrix::from_fn(m, m, |i, j| {
        (if i == j { 1.0 + eps } else { 0.0 }) - c.p[i][j] + c.pi[j]
    });
    let lu = a.clone().lu();
    let g = DVector::from_vec(c.g.clone());
    let mut h = lu
        .solve(&g)
        .ok_or_else(|| Error::Certification("singular resolvent system".into()))?;
    // one step of refinement
    let r = &g - &a * &h;
    if let Some(d) = lu.solve(&r) {
        h += d;
    }
    Ok(h.iter().copied().collect())
}

fn chain_residual(c: &FiniteChain, eps: f64, h: &[f64], qh: &[f64]) -> f64 {
    (0..c.states())
        .map(|i| ((1.0 + eps) * h[i] - qh[i] - c.g[i]).abs())
        .fold(0.0, f64::max)
}

/// Terms K and the sup-norm tail bound of Σ_{k>K} Q^{k−1}g/(1+ε)^k
/// when ‖Q^k g‖_∞ ≤ D 2^{−k}.
fn dyadic_terms(decay: f64, eps: f64) -> Result<(usize, f64)> {
    let r = 0.5 / (1.0 + eps);
    // tail ≤ 2D r^{K+1}/(1 − r) ≤ 4D r^{K+1}
    let mut k = 1usize;
    let mut bound = 4.0 * decay * r * r;
    while bound > RESOLVENT_TOLERANCE {
        k += 1;
        bound *= r;
        if k > MAX_SERIES_TERMS {
            return Err(Error::Budget(format!(
                "resolvent series needs more than {MAX_SERIES_TERMS} terms"
            )));
        }
    }
    Ok((k, bound))
}

fn build(model: &ProcessModel, eps: f64) -> Result<Resolvent> {
    let (h, terms, tail) = match model {
        ProcessModel::Zero => (StateFn::Zero, 0, 0.0),
        ProcessModel::Chain(c) => (StateFn::Chain(chain_solve(c, eps)?), 0, 0.0),
        ProcessModel::Iid(_) | ProcessModel::Linear(_) => {
            // h_j = (a_j + h_{j+1})/(1+ε), exact for a finite filter
            let a = model.g();
            let StateFn::Linear(a) = a else { unreachable!() };
            let mut h = vec![0.0; a.len()];
            let mut next = 0.0;
            for j in (0..a.len()).rev() {
                next = (a[j] + next) / (1.0 + eps);
                h[j] = next;
            }
            let n = h.len();
            (StateFn::Linear(h), n, 0.0)
        }
        ProcessModel::BernoulliShift(b) => {
            let (k, bound) = dyadic_terms(b.functional.decay_constant(), eps)?;
            let mut terms = Vec::with_capacity(k);
            let mut w = 1.0;
            for _ in 0..k {
                w /= 1.0 + eps;
                terms.push(w);
            }
            (
                StateFn::Dyadic {
                    functional: b.functional,
                    terms,
                },
                k,
                bound,
            )
        }
    };
    let qh = apply_q(model, &h)?;
    let residual_bound = match (model, &h, &qh) {
        (ProcessModel::Chain(c), StateFn::Chain(hv), StateFn::Chain(qv)) => chain_residual(c, eps, hv, qv),
        _ => {
            let r = h.combine(1.0 + eps, &qh, -1.0)?.combine(1.0, &model.g(), -1.0)?;
            r.l2_norm(model)?
        }
    };
    Ok(Resolvent {
        model: model.to_string(),
        epsilon: eps,
        h,
        qh,
        residual_bound,
        terms,
        truncation_bound: tail,
    })
}

/// h_ε = Σ_{k≥1} Q^{k−1} g/(1+ε)^k.
pub fn resolvent_h(model: &ProcessModel, eps: f64) -> Result<Resolvent> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("ε must be positive, got {eps}")));
    }
    build(model, eps)
}

/// h = Σ_{k≥1} Q^{k−1} g, the ε → 0 limit, for the families where it is
/// available in closed form (all bundled ones: chains through the
/// fundamental matrix, finite filters through suffix sums, Bernoulli
/// shifts through the geometric contraction of Q).
pub fn resolvent_limit(model: &ProcessModel) -> Result<Resolvent> {
    build(model, 0.0)
}

/// ε_n = 2^{−k_n} with 2^{k_n − 1} ≤ n < 2^{k_n}.
pub fn epsilon_for(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let k = 64 - n.leading_zeros() as i32;
    Ok(2f64.powi(-k))
}

/// S, M and R along one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleDecomposition {
    pub model: String,
    pub seed: u64,
    pub epsilon: f64,
    pub s: Vec<f64>,
    pub m: Vec<f64>,
    pub r: Vec<f64>,
    /// max_n |S_n − M_n − R_n|
    pub max_identity_residual: f64,
}

impl MartingaleDecomposition {
    pub fn max_abs_s(&self) -> f64 {
        self.s.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    /// Whether the identity holds to 10⁻⁹ (1 + max |S_n|).
    pub fn identity_holds(&self) -> bool {
        self.max_identity_residual <= 1e-9 * (1.0 + self.max_abs_s())
    }
}

/// Decompose a stored path at ε > 0.
pub fn decompose(path: &PathSample, model: &ProcessModel, eps: f64) -> Result<MartingaleDecomposition> {
    let res = resolvent_h(model, eps)?;
    decompose_with(path, &res)
}

/// Decompose a stored path with a given resolvent (ε = 0 allowed).
pub fn decompose_with(path: &PathSample, res: &Resolvent) -> Result<MartingaleDecomposition> {
    if path.model != res.model {
        return Err(Error::InvalidInput(format!(
            "path of {} cannot be decomposed with a resolvent of {}",
            path.model, res.model
        )));
    }
    if !path.has_states() {
        return Err(Error::InvalidInput("path carries no state information".into()));
    }
    let n = path.len();
    let state = |k: usize| path.state(k).expect("checked above");
    let (mut s_acc, mut m_acc, mut sh_acc) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    let qh0 = res.qh.eval(state(0));
    let mut qh_prev = qh0;
    let (mut s, mut m, mut r) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut worst: f64 = 0.0;
    for k in 1..=n {
        let w = state(k);
        let hk = res.h.eval(w);
        let qhk = res.qh.eval(w);
        s_acc.add(path.x[k - 1]);
        m_acc.add(hk);
        m_acc.add(-qh_prev);
        sh_acc.add(hk);
        let rk = res.epsilon * sh_acc.value() + qh0 - qhk;
        let (sv, mv) = (s_acc.value(), m_acc.value());
        worst = worst.max((sv - mv - rk).abs());
        s.push(sv);
        m.push(mv);
        r.push(rk);
        qh_prev = qhk;
    }
    Ok(MartingaleDecomposition {
        model: path.model.clone(),
        seed: path.seed,
        epsilon: res.epsilon,
        s,
        m,
        r,
        max_identity_residual: worst,
    })
}

/// Conditional centering of the increments H_ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualCheck {
    pub epsilon: f64,
    /// True when computed exactly from the transition matrix.
    pub exact: bool,
    /// Exact: max_w |E[H_ε(w, W_1)]|; sampled: |mean of H_ε along a path|.
    pub value: f64,
    /// Standard error of the sampled mean (0 when exact).
    pub std_error: f64,
    pub samples: usize,
}

/// Check E[H_ε(W_0, W_1) | W_0] = 0. Chains are checked exactly; other
/// families by the mean of H_ε(W_{k−1}, W_k) along a path of length n.
pub fn martingale_residual_check(model: &ProcessModel, eps: f64, n: usize, seed: u64) -> Result<ResidualCheck> {
    let res = resolvent_h(model, eps)?;
    if let (ProcessModel::Chain(c), StateFn::Chain(h), StateFn::Chain(qh)) = (model, &res.h, &res.qh) {
        let worst = (0..c.states())
            .map(|w| {
                let s: CompensatedSum = (0..c.states()).map(|v| c.p[w][v] * (h[v] - qh[w])).collect();
                s.value().abs()
            })
            .fold(0.0, f64::max);
        return Ok(ResidualCheck {
            epsilon: eps,
            exact: true,
            value: worst,
            std_error: 0.0,
            samples: 0,
        });
    }
    let path = sample_path_with(
        model,
        n,
        StreamKey::new(seed, 0, StreamRole::Auxiliary),
        DEFAULT_WORK_BUDGET,
    )?;
    let (mut sum, mut sq) = (CompensatedSum::new(), CompensatedSum::new());
    let mut prev = res.qh.eval(path.state(0).expect("sampled path"));
    for k in 1..=n {
        let w = path.state(k).expect("sampled path");
        let inc = res.h.eval(w) - prev;
        sum.add(inc);
        sq.add(inc * inc);
        prev = res.qh.eval(w);
    }
    let mean = sum.value() / n as f64;
    let var = (sq.value() / n as f64 - mean * mean).max(0.0);
    Ok(ResidualCheck {
        epsilon: eps,
        exact: false,
        value: mean.abs(),
        std_error: (var / n as f64).sqrt(),
        samples: n,
    })
}

/// Which estimator of σ².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigma2Method {
    /// Monte Carlo E[S_n²]/n.
    VarianceRate,
    /// E[H_ε²] extrapolated to ε = 0.
    Increment,
}

/// Sizes for a σ² estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sigma2Budget {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sigma2Estimate {
    pub method: Sigma2Method,
    pub value: f64,
    pub std_error: f64,
    /// ε at which E[H_ε²] was taken (increment method).
    pub epsilon: Option<f64>,
    pub n: usize,
    pub reps: usize,
}

/// E[H_ε²] = ‖h_ε‖² − ‖Qh_ε‖², evaluated exactly in the model's
/// representation; on chains as Σ_{w,w′} π_w P(w,w′) H_ε(w,w′)².
pub fn increment_second_moment(model: &ProcessModel, res: &Resolvent) -> Result<f64> {
    if let (ProcessModel::Chain(c), StateFn::Chain(h), StateFn::Chain(qh)) = (model, &res.h, &res.qh) {
        let mut s = CompensatedSum::new();
        for (w, &qw) in qh.iter().enumerate() {
            for (v, &hv) in h.iter().enumerate() {
                let inc = hv - qw;
                s.add(c.pi[w] * c.p[w][v] * inc * inc);
            }
        }
        return Ok(s.value());
    }
    let hh = res.h.inner_product(&res.h, model)?;
    let qq = res.qh.inner_product(&res.qh, model)?;
    Ok((hh - qq).max(0.0))
}

/// Estimate σ² by either method.
pub fn sigma2(model: &ProcessModel, method: Sigma2Method, budget: Sigma2Budget) -> Result<Sigma2Estimate> {
    if budget.n == 0 {
        return Err(Error::InvalidInput("σ² budget needs n ≥ 1".into()));
    }
    match method {
        Sigma2Method::Increment => {
            // E[H_ε²] is smooth in ε; one Richardson step over (ε_n, ε_n/2)
            let e1 = epsilon_for(budget.n as u64)?;
            let f1 = increment_second_moment(model, &resolvent_h(model, e1)?)?;
            let f2 = increment_second_moment(model, &resolvent_h(model, e1 / 2.0)?)?;
            Ok(Sigma2Estimate {
                method,
                value: 2.0 * f2 - f1,
                std_error: (f2 - f1).abs(),
                epsilon: Some(e1),
                n: budget.n,
                reps: 0,
            })
        }
        Sigma2Method::VarianceRate => {
            if budget.reps < 2 {
                return Err(Error::InvalidInput(
                    "variance-rate estimate needs at least 2 replications".into(),
                ));
            }
            let cost = budget.n as u128 * budget.reps as u128 * model.step_cost() as u128;
            if cost > 64 * DEFAULT_WORK_BUDGET as u128 {
                return Err(Error::Budget(format!("σ² Monte Carlo would cost {cost} work units")));
            }
            let n = budget.n;
            let draws: Vec<f64> = (0..budget.reps as u64)
                .into_par_iter()
                .map(|rep| {
                    let mut s = Sampler::seeded(model, StreamKey::new(budget.seed, rep, StreamRole::Path));
                    let mut acc = 0.0;
                    for _ in 0..n {
                        acc += s.step();
                    }
                    acc * acc / n as f64
                })
                .collect();
            let (mean, se) = mean_and_se(&draws);
            Ok(Sigma2Estimate {
                method,
                value: mean,
                std_error: se,
                epsilon: None,
                n,
                reps: budget.reps,
            })
        }
    }
}

pub(crate) fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().copied().collect::<CompensatedSum>().value() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).collect::<CompensatedSum>().value() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// ⟨f, Q^k g⟩ for k = 0..=kmax when the model makes it cheap.
fn autocov(model: &ProcessModel, f: &StateFn, g: &StateFn, kmax: usize) -> Option<Vec<f64>> {
    match (model, f, g) {
        (_, StateFn::Zero, _) | (_, _, StateFn::Zero) => Some(vec![0.0; kmax + 1]),
        (ProcessModel::Chain(c), StateFn::Chain(fv), StateFn::Chain(gv)) => {
            let weighted: Vec<f64> = c.pi.iter().zip(fv).map(|(p, x)| p * x).collect();
            let mut v = gv.clone();
            let mut out = Vec::with_capacity(kmax + 1);
            for k in 0..=kmax {
                if k > 0 {
                    v = c.apply(&v);
                }
                out.push(weighted.iter().zip(&v).map(|(a, b)| a * b).sum());
            }
            Some(out)
        }
        (_, StateFn::Linear(fv), StateFn::Linear(gv)) => Some(
            (0..=kmax)
                .map(|k| fv.iter().zip(gv.iter().skip(k)).map(|(a, b)| a * b).sum())
                .collect(),
        ),
        (
            _,
            StateFn::Dyadic {
                functional: DyadicFunctional::Affine { slope },
                terms: a,
            },
            StateFn::Dyadic { terms: b, .. },
        ) => {
            let collapse = |t: &[f64]| -> f64 { t.iter().enumerate().map(|(j, c)| c * 0.5f64.powi(j as i32)).sum() };
            let base = collapse(a) * collapse(b) * slope * slope / 12.0;
            Some((0..=kmax).map(|k| base * 0.5f64.powi(k as i32)).collect())
        }
        _ => None,
    }
}

/// One row of the remainder diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemainderRow {
    pub n: u64,
    pub epsilon: f64,
    /// ‖R_n(ε)‖₂.
    pub norm: f64,
    /// Standard error of `norm` (0 when exact).
    pub std_error: f64,
    /// √(ℓ(n)/n) ‖R_n‖.
    pub normalized: f64,
    /// Σ_{k≤n} √(ℓ(k)/k³) ‖R_k‖.
    pub partial_sum: f64,
}

/// A term j √ℓ(2^j) √δ_j ‖h_{δ_j}‖ of the dyadic sum, δ_j = 2^{−j}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicTerm {
    pub j: u32,
    pub h_norm: f64,
    pub term: f64,
    pub partial_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemainderDiagnostics {
    pub model: String,
    pub ell: String,
    /// ε → 0 form (R_n = Qh(W_0) − Qh(W_n)) instead of ε = ε_n.
    pub limit_form: bool,
    pub exact: bool,
    pub rows: Vec<RemainderRow>,
    pub dyadic: Vec<DyadicTerm>,
}

/// Monte Carlo sizes for families without exact remainder norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McBudget {
    pub reps: usize,
    pub seed: u64,
}

/// ‖R_n‖ for n = 1..=n_max at ε = ε_n (or in the limit form), normalized
/// as √(ℓ(n)/n)‖R_n‖, with partial sums of Σ √(ℓ(n)/n³)‖R_n‖, and the
/// dyadic terms j √ℓ(2^j) √δ_j ‖h_{δ_j}‖ for j = 1..=60.
pub fn remainder_norm_diagnostics(
    model: &ProcessModel,
    ell: SlowlyVaryingSpec,
    n_max: u64,
    limit_form: bool,
    mc: McBudget,
) -> Result<RemainderDiagnostics> {
    if n_max == 0 {
        return Err(Error::InvalidInput("n_max must be at least 1".into()));
    }
    let resolvent_for = |n: u64| -> Result<Resolvent> {
        if limit_form {
            resolvent_limit(model)
        } else {
            resolvent_h(model, epsilon_for(n)?)
        }
    };
    // blocks of n sharing one ε: [2^{j−1}, 2^j)
    let blocks: Vec<(u64, u64)> = if limit_form {
        vec![(1, n_max)]
    } else {
        let mut b = Vec::new();
        let mut lo = 1u64;
        while lo <= n_max {
            let hi = (2 * lo - 1).min(n_max);
            b.push((lo, hi));
            lo *= 2;
        }
        b
    };
    let mut norms: Vec<(f64, f64, f64)> = Vec::with_capacity(n_max as usize);
    let mut exact = true;
    for &(lo, hi) in &blocks {
        let res = resolvent_for(lo)?;
        let eps = res.epsilon;
        let kmax = hi as usize + 1;
        let c = autocov(model, &res.h, &res.h, kmax);
        let e = autocov(model, &res.qh, &res.h, kmax);
        match (c, e) {
            (Some(c), Some(e)) => {
                // ‖R_n‖² = ε² Var S_n(h) + 2(e_1 − e_{n+1}) + 2ε(Σ_{k≤n} e_k − Σ_{k≤n} c_k)
                // with c_k = ⟨h, Q^k h⟩, e_k = ⟨Qh, Q^k h⟩
                let (mut a, mut pc, mut pe) = (0.0, 0.0, 0.0);
                for n in 1..=hi {
                    // A_n = A_{n−1} + c_0 + 2 Σ_{k<n} c_k
                    a += c[0] + 2.0 * pc;
                    pc += c[n as usize];
                    pe += e[n as usize];
                    if n >= lo {
                        let sq = eps * eps * a + 2.0 * (e[1] - e[n as usize + 1]) + 2.0 * eps * (pe - pc);
                        norms.push((eps, sq.max(0.0).sqrt(), 0.0));
                    }
                }
            }
            _ => {
                exact = false;
                norms.extend(mc_block(model, &res, lo, hi, mc)?);
            }
        }
    }
    let mut rows = Vec::with_capacity(norms.len());
    let mut partial = CompensatedSum::new();
    for (i, (eps, norm, se)) in norms.into_iter().enumerate() {
        let n = i as u64 + 1;
        let l = ell.eval(n)?;
        let nf = n as f64;
        partial.add((l / (nf * nf * nf)).sqrt() * norm);
        rows.push(RemainderRow {
            n,
            epsilon: eps,
            norm,
            std_error: se,
            normalized: (l / nf).sqrt() * norm,
            partial_sum: partial.value(),
        });
    }
    let mut dyadic = Vec::with_capacity(60);
    let mut dsum = CompensatedSum::new();
    for j in 1..=60u32 {
        let delta = 2f64.powi(-(j as i32));
        let res = resolvent_h(model, delta)?;
        let hn = res.h.l2_norm(model)?;
        let term = j as f64 * ell.eval(1u64 << j)?.sqrt() * delta.sqrt() * hn;
        dsum.add(term);
        dyadic.push(DyadicTerm {
            j,
            h_norm: hn,
            term,
            partial_sum: dsum.value(),
        });
    }
    Ok(RemainderDiagnostics {
        model: model.to_string(),
        ell: ell.to_string(),
        limit_form,
        exact,
        rows,
        dyadic,
    })
}

/// Monte Carlo ‖R_n‖ for lo ≤ n ≤ hi with a fixed resolvent.
fn mc_block(model: &ProcessModel, res: &Resolvent, lo: u64, hi: u64, mc: McBudget) -> Result<Vec<(f64, f64, f64)>> {
    if mc.reps < 2 {
        return Err(Error::InvalidInput(
            "Monte Carlo remainder norms need at least 2 replications".into(),
        ));
    }
    let width = (hi - lo + 1) as usize;
    let per_rep: Vec<Vec<f64>> = (0..mc.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut s = Sampler::seeded(model, StreamKey::new(mc.seed, rep, StreamRole::Auxiliary));
            let qh0 = res.qh.eval(s.state());
            let mut sh = 0.0;
            let mut out = Vec::with_capacity(width);
            for n in 1..=hi {
                s.step();
                let w: StateRef<'_> = s.state();
                sh += res.h.eval(w);
                if n >= lo {
                    let r = res.epsilon * sh + qh0 - res.qh.eval(w);
                    out.push(r * r);
                }
            }
            out
        })
        .collect();
    Ok((0..width)
        .map(|i| {
            let col: Vec<f64> = per_rep.iter().map(|v| v[i]).collect();
            let (m, se) = mean_and_se(&col);
            let norm = m.sqrt();
            // delta method for the square root
            let se_norm = if norm > 0.0 { se / (2.0 * norm) } else { 0.0 };
            (res.epsilon, norm, se_norm)
        })
        .collect())
}
