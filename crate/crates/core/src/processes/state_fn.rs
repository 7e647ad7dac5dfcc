//! Functions of the state and the transfer operator acting on them.

use super::{DyadicFunctional, ProcessModel, StateRef};
use crate::numeric::CompensatedSum;
use crate::{Error, Result};

/// A function f(W) in the representation native to each family.
#[derive(Debug, Clone, PartialEq)]
pub enum StateFn {
    Zero,
    /// f(i) for each chain state.
    Chain(Vec<f64>),
    /// f(W) = Σ_j c_j ε_{−j} for W = (ε_0, ε_{−1}, …).
    Linear(Vec<f64>),
    /// f = Σ_j terms[j] Q^j g for the shift's functional g.
    Dyadic {
        functional: DyadicFunctional,
        terms: Vec<f64>,
    },
}

/// Σ_j a_j w_j in index order. Sampling and evaluation both go through
/// here so that X_k = g(W_k) holds bit for bit.
#[inline]
pub(crate) fn dot_seq(a: &[f64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(w) {
        s += x * y;
    }
    s
}

impl ProcessModel {
    /// The functional g with X_k = g(W_k).
    pub fn g(&self) -> StateFn {
        match self {
            ProcessModel::Zero => StateFn::Zero,
            ProcessModel::Iid(_) => StateFn::Linear(vec![1.0]),
            ProcessModel::Linear(l) => StateFn::Linear(l.coeffs.clone()),
            ProcessModel::Chain(c) => StateFn::Chain(c.g.clone()),
            ProcessModel::BernoulliShift(b) => StateFn::Dyadic {
                functional: b.functional,
                terms: vec![1.0],
            },
        }
    }
}

fn mismatch(f: &StateFn, model: &ProcessModel) -> Error {
    Error::Unrepresentable(format!("{} is not a function on the state space of {model}", f.kind()))
}

impl StateFn {
    fn kind(&self) -> &'static str {
        match self {
            StateFn::Zero => "the zero function",
            StateFn::Chain(_) => "a chain vector",
            StateFn::Linear(_) => "a linear functional of innovations",
            StateFn::Dyadic { .. } => "a dyadic series",
        }
    }

    fn check(&self, model: &ProcessModel) -> Result<()> {
        let ok = match (self, model) {
            (StateFn::Zero, _) => true,
            (StateFn::Chain(v), ProcessModel::Chain(c)) => v.len() == c.states(),
            (StateFn::Linear(_), ProcessModel::Iid(_) | ProcessModel::Linear(_)) => true,
            (StateFn::Dyadic { functional, .. }, ProcessModel::BernoulliShift(b)) => *functional == b.functional,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(mismatch(self, model))
        }
    }

    /// f at a state.
    #[inline]
    pub fn eval(&self, state: StateRef<'_>) -> f64 {
        match (self, state) {
            (StateFn::Zero, _) => 0.0,
            (StateFn::Chain(v), StateRef::Chain(i)) => v[i],
            (StateFn::Linear(c), StateRef::Window(w)) => dot_seq(c, w),
            (StateFn::Dyadic { functional, terms }, StateRef::Dyadic(bits)) => {
                if let DyadicFunctional::Affine { .. } = functional {
                    // Q^j g = g / 2^j
                    let mut s = 0.0;
                    let mut scale = 1.0;
                    for t in terms {
                        s += t * scale;
                        scale *= 0.5;
                    }
                    return s * functional.eval_bits(bits);
                }
                let mut s = 0.0;
                for (j, t) in terms.iter().enumerate() {
                    if *t != 0.0 {
                        s += t * functional.q_power_bits(j as u32, bits);
                    }
                }
                s
            }
            (f, s) => panic!("{} cannot be evaluated at {s:?}", f.kind()),
        }
    }

    /// a·f + b·g for functions in the same representation.
    pub fn combine(&self, a: f64, other: &StateFn, b: f64) -> Result<StateFn> {
        let lin = |x: &[f64], y: &[f64]| -> Vec<f64> {
            (0..x.len().max(y.len()))
                .map(|i| a * x.get(i).copied().unwrap_or(0.0) + b * y.get(i).copied().unwrap_or(0.0))
                .collect()
        };
        Ok(match (self, other) {
            (StateFn::Zero, StateFn::Zero) => StateFn::Zero,
            (StateFn::Zero, g) => g.combine(b, &StateFn::Zero, 0.0)?,
            (f, StateFn::Zero) => match f {
                StateFn::Zero => StateFn::Zero,
                StateFn::Chain(v) => StateFn::Chain(v.iter().map(|x| a * x).collect()),
                StateFn::Linear(v) => StateFn::Linear(v.iter().map(|x| a * x).collect()),
                StateFn::Dyadic { functional, terms } => StateFn::Dyadic {
                    functional: *functional,
                    terms: terms.iter().map(|x| a * x).collect(),
                },
            },
            (StateFn::Chain(x), StateFn::Chain(y)) if x.len() == y.len() => StateFn::Chain(lin(x, y)),
            (StateFn::Linear(x), StateFn::Linear(y)) => StateFn::Linear(lin(x, y)),
            (
                StateFn::Dyadic {
                    functional: f1,
                    terms: x,
                },
                StateFn::Dyadic {
                    functional: f2,
                    terms: y,
                },
            ) if f1 == f2 => StateFn::Dyadic {
                functional: *f1,
                terms: lin(x, y),
            },
            _ => {
                return Err(Error::Unrepresentable(format!(
                    "cannot combine {} with {}",
                    self.kind(),
                    other.kind()
                )))
            }
        })
    }

    /// E_π[f g] under the stationary law.
    pub fn inner_product(&self, other: &StateFn, model: &ProcessModel) -> Result<f64> {
        self.check(model)?;
        other.check(model)?;
        match (self, other) {
            (StateFn::Zero, _) | (_, StateFn::Zero) => Ok(0.0),
            (StateFn::Chain(x), StateFn::Chain(y)) => {
                let ProcessModel::Chain(c) = model else { unreachable!() };
                let s: CompensatedSum = (0..x.len()).map(|i| c.pi[i] * x[i] * y[i]).collect();
                Ok(s.value())
            }
            // innovations are uncorrelated with unit variance
            (StateFn::Linear(x), StateFn::Linear(y)) => {
                let s: CompensatedSum = x.iter().zip(y).map(|(a, b)| a * b).collect();
                Ok(s.value())
            }
            (StateFn::Dyadic { functional, terms: x }, StateFn::Dyadic { terms: y, .. }) => {
                Ok(dyadic_inner(functional, x, y))
            }
            _ => Err(mismatch(other, model)),
        }
    }

    /// ‖f‖₂ under the stationary law.
    pub fn l2_norm(&self, model: &ProcessModel) -> Result<f64> {
        Ok(self.inner_product(self, model)?.max(0.0).sqrt())
    }
}

/// ∫₀¹ f g dw for f, g dyadic series. Each Q^j g is affine (Affine) or
/// takes two values split at one breakpoint (Indicator), so the integral
/// is exact.
fn dyadic_inner(functional: &DyadicFunctional, x: &[f64], y: &[f64]) -> f64 {
    match *functional {
        DyadicFunctional::Affine { slope } => {
            let collapse = |t: &[f64]| -> f64 { t.iter().enumerate().map(|(j, c)| c * 0.5f64.powi(j as i32)).sum() };
            collapse(x) * collapse(y) * slope * slope / 12.0
        }
        DyadicFunctional::Indicator { .. } => {
            let mut cuts = vec![0.0, 1.0];
            for (j, (a, b)) in (0..x.len().max(y.len())).map(|j| (j, (x.get(j), y.get(j)))) {
                let nonzero = a.is_some_and(|v| *v != 0.0) || b.is_some_and(|v| *v != 0.0);
                if nonzero {
                    if let Some(p) = functional.breakpoint(j as u32) {
                        cuts.push(p);
                    }
                }
            }
            cuts.sort_by(|a, b| a.total_cmp(b));
            cuts.dedup();
            let eval = |t: &[f64], w: f64| -> f64 {
                t.iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(j, c)| c * functional.q_power_real(j as u32, w))
                    .sum()
            };
            let mut s = CompensatedSum::new();
            for win in cuts.windows(2) {
                let (lo, hi) = (win[0], win[1]);
                if hi > lo {
                    let mid = 0.5 * (lo + hi);
                    s.add((hi - lo) * eval(x, mid) * eval(y, mid));
                }
            }
            s.value()
        }
    }
}

/// Qf(w) = E[f(W_1) | W_0 = w].
pub fn apply_q(model: &ProcessModel, f: &StateFn) -> Result<StateFn> {
    f.check(model)?;
    Ok(match f {
        StateFn::Zero => StateFn::Zero,
        StateFn::Chain(v) => {
            let ProcessModel::Chain(c) = model else { unreachable!() };
            StateFn::Chain(c.apply(v))
        }
        // Σ c_j ε_{1−j} given the past keeps only j ≥ 1
        StateFn::Linear(c) => StateFn::Linear(c.iter().skip(1).copied().collect()),
        StateFn::Dyadic { functional, terms } => {
            let mut t = Vec::with_capacity(terms.len() + 1);
            t.push(0.0);
            t.extend_from_slice(terms);
            StateFn::Dyadic {
                functional: *functional,
                terms: t,
            }
        }
    })
}

/// E(S_n | F_0) as a function of W_0.
pub fn exact_cond_sn(model: &ProcessModel, n: u64) -> Result<StateFn> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    Ok(match model {
        ProcessModel::Zero => StateFn::Zero,
        ProcessModel::Chain(c) => {
            let mut acc = vec![0.0; c.states()];
            let mut v = c.g.clone();
            for _ in 0..n {
                v = c.apply(&v);
                for (a, x) in acc.iter_mut().zip(&v) {
                    *a += x;
                }
            }
            StateFn::Chain(acc)
        }
        ProcessModel::Iid(_) | ProcessModel::Linear(_) => {
            // s_{j,n} = a_{j+1} + ⋯ + a_{j+n}
            let a = model.filter().expect("linear family");
            let len = a.len().saturating_sub(1);
            let mut prefix = Vec::with_capacity(a.len() + 1);
            let mut acc = CompensatedSum::new();
            prefix.push(0.0);
            for x in a {
                acc.add(*x);
                prefix.push(acc.value());
            }
            let n = n.min(a.len() as u64) as usize;
            let s: Vec<f64> = (0..len)
                .map(|j| prefix[(j + n + 1).min(a.len())] - prefix[j + 1])
                .collect();
            if s.iter().all(|&x| x == 0.0) {
                StateFn::Zero
            } else {
                StateFn::Linear(s)
            }
        }
        ProcessModel::BernoulliShift(b) => {
            let mut terms = vec![1.0; n as usize + 1];
            terms[0] = 0.0;
            StateFn::Dyadic {
                functional: b.functional,
                terms,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(s: &str) -> ProcessModel {
        s.parse().unwrap()
    }

    #[test]
    fn q_on_the_reference_examples() {
        let m = model("chain2:p=0.25,q=0.25");
        assert_eq!(apply_q(&m, &m.g()).unwrap(), StateFn::Chain(vec![0.5, -0.5]));
        let mut f = m.g();
        for k in 1..=50 {
            f = apply_q(&m, &f).unwrap();
            let StateFn::Chain(v) = &f else { unreachable!() };
            assert_eq!(v[0], 0.5f64.powi(k));
            assert_eq!(v[1], -(0.5f64.powi(k)));
        }
        let b = model("bshift:affine");
        let qg = apply_q(&b, &b.g()).unwrap();
        for bits in [0u64, 1 << 63, u64::MAX / 3] {
            assert_eq!(
                qg.eval(StateRef::Dyadic(bits)),
                0.5 * b.g().eval(StateRef::Dyadic(bits))
            );
        }
        let iid = model("iid:uniform");
        let q = apply_q(&iid, &iid.g()).unwrap();
        assert_eq!(q, StateFn::Linear(vec![]));
        assert_eq!(q.l2_norm(&iid).unwrap(), 0.0);
    }

    #[test]
    fn conditional_sums() {
        let ma = model("ma:1,1");
        for n in [1, 2, 10, 1000] {
            assert_eq!(exact_cond_sn(&ma, n).unwrap(), StateFn::Linear(vec![1.0]));
        }
        assert_eq!(exact_cond_sn(&model("iid:normal"), 5).unwrap(), StateFn::Zero);
        let c = model("chain2:p=0.25,q=0.25");
        for n in 1..=40u64 {
            let StateFn::Chain(v) = exact_cond_sn(&c, n).unwrap() else {
                unreachable!()
            };
            let expect = 1.0 - 0.5f64.powi(n as i32);
            assert!((v[0] - expect).abs() < 1e-15 && (v[1] + expect).abs() < 1e-15);
        }
        assert!(exact_cond_sn(&c, 0).is_err());
    }

    #[test]
    fn bernoulli_norms_are_exact() {
        let b = model("bshift:affine");
        // ‖Σ_{k=1}^n Q^k g‖ = (1 − 2^{-n})/√12
        let v = exact_cond_sn(&b, 3).unwrap().l2_norm(&b).unwrap();
        assert!((v - 0.875 / 12f64.sqrt()).abs() < 1e-15);
        let ind = model("bshift:indicator:0.25");
        // g = 1{w < 1/4} − 1/4 has variance 3/16; Qg = 1{w < 1/2} − 1/4 − 1/4·… check E[g Qg] by brute force
        let g = ind.g();
        assert!((g.l2_norm(&ind).unwrap() - (3.0f64 / 16.0).sqrt()).abs() < 1e-15);
        let qg = apply_q(&ind, &g).unwrap();
        let grid = 1 << 16;
        let brute: f64 = (0..grid)
            .map(|i| {
                let w = (i as f64 + 0.5) / grid as f64;
                let DyadicFunctional::Indicator { tau } = (DyadicFunctional::Indicator { tau: 0.25 }) else {
                    unreachable!()
                };
                let g0 = if w < tau { 1.0 - tau } else { -tau };
                let g1 = ((tau * 2.0 - w).ceil().clamp(0.0, 2.0)) / 2.0 - tau;
                g0 * g1
            })
            .sum::<f64>()
            / grid as f64;
        assert!((g.inner_product(&qg, &ind).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn representations_do_not_mix() {
        let c = model("chain2:p=0.25,q=0.25");
        assert!(apply_q(&c, &StateFn::Linear(vec![1.0])).is_err());
        assert!(StateFn::Chain(vec![1.0, 2.0, 3.0]).l2_norm(&c).is_err());
    }
}
