//! Stationary path simulation.

use std::io::{self, Write};

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::state_fn::dot_seq;
use super::{bits_to_unit, Innovation, ProcessModel, DEFAULT_WORK_BUDGET};
use crate::rng::{uniform, StreamKey, StreamRole};
use crate::{Error, Result};

/// A borrowed view of W_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateRef<'a> {
    /// The zero process has no state to speak of.
    None,
    Chain(usize),
    /// (ε_k, ε_{k−1}, …, ε_{k−J}).
    Window(&'a [f64]),
    /// w = bits / 2⁶⁴.
    Dyadic(u64),
}

/// How W_0 is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartState {
    /// Drawn from the stationary law.
    Stationary,
    /// A fixed chain state.
    Chain(usize),
    /// A fixed dyadic point bits / 2⁶⁴.
    Dyadic(u64),
}

/// W_0..W_N for the families with a finite description of the state.
#[derive(Debug, Clone, PartialEq)]
pub enum StateTrace {
    Chain(Vec<u32>),
    Dyadic(Vec<u64>),
}

enum Kind<'m> {
    Zero,
    Linear {
        coeffs: &'m [f64],
        innovation: Innovation,
        /// Doubled ring: the newest-first window is ring[head..head + len].
        ring: Vec<f64>,
        head: usize,
        xi_prev: f64,
    },
    Chain(usize),
    Dyadic {
        bits: u64,
        pool: u64,
        left: u32,
    },
}

/// Streams X_1, X_2, … of one stationary path.
pub struct Sampler<'m> {
    model: &'m ProcessModel,
    rng: ChaCha8Rng,
    kind: Kind<'m>,
    last: f64,
}

#[inline]
fn rademacher<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    if rng.next_u64() >> 63 == 1 {
        1.0
    } else {
        -1.0
    }
}

const ROOT_THREE: f64 = 1.732_050_807_568_877_2;
const INV_ROOT_FIVE: f64 = 0.447_213_595_499_957_9;

#[inline]
fn draw<R: RngCore + ?Sized>(innovation: Innovation, rng: &mut R, xi_prev: &mut f64) -> f64 {
    match innovation {
        Innovation::Normal => StandardNormal.sample(rng),
        Innovation::Rademacher => rademacher(rng),
        Innovation::Uniform => (2.0 * uniform(rng) - 1.0) * ROOT_THREE,
        Innovation::Mds => {
            let xi = rademacher(rng);
            let e = xi * (2.0 + *xi_prev) * INV_ROOT_FIVE;
            *xi_prev = xi;
            e
        }
    }
}

impl<'m> Sampler<'m> {
    /// W_0 is drawn from `init` (when the start is stationary); every later
    /// step draws from `path`.
    pub fn new<R: RngCore + ?Sized>(
        model: &'m ProcessModel,
        start: StartState,
        init: &mut R,
        path: ChaCha8Rng,
    ) -> Result<Self> {
        let kind = match (model, start) {
            (ProcessModel::Zero, _) => Kind::Zero,
            (ProcessModel::Chain(c), StartState::Stationary) => Kind::Chain(c.draw_stationary(init.next_u64())),
            (ProcessModel::Chain(c), StartState::Chain(i)) if i < c.states() => Kind::Chain(i),
            (ProcessModel::BernoulliShift(_), StartState::Stationary) => Kind::Dyadic {
                bits: init.next_u64(),
                pool: 0,
                left: 0,
            },
            (ProcessModel::BernoulliShift(_), StartState::Dyadic(bits)) => Kind::Dyadic { bits, pool: 0, left: 0 },
            (ProcessModel::Iid(_) | ProcessModel::Linear(_), StartState::Stationary) => {
                let coeffs = model.filter().expect("linear family");
                let innovation = model.innovation().expect("linear family");
                let len = coeffs.len();
                let mut ring = vec![0.0; 2 * len];
                let mut xi_prev = rademacher(init);
                // oldest first, so the newest innovation ends up at the head
                let mut head = len;
                for _ in 0..len {
                    head -= 1;
                    let e = draw(innovation, init, &mut xi_prev);
                    ring[head] = e;
                    ring[head + len] = e;
                }
                Kind::Linear {
                    coeffs,
                    innovation,
                    ring,
                    head,
                    xi_prev,
                }
            }
            (_, start) => {
                return Err(Error::InvalidInput(format!(
                    "start {start:?} is not a state of {model}"
                )));
            }
        };
        Ok(Self {
            model,
            rng: path,
            kind,
            last: 0.0,
        })
    }

    /// Stationary start with W_0 from the key's initial-state stream and
    /// the steps from its path stream.
    pub fn seeded(model: &'m ProcessModel, key: StreamKey) -> Self {
        let mut init = StreamKey {
            role: StreamRole::InitialState,
            ..key
        }
        .rng();
        let path = StreamKey {
            role: StreamRole::Path,
            ..key
        }
        .rng();
        Self::new(model, StartState::Stationary, &mut init, path).expect("stationary start is always valid")
    }

    pub fn model(&self) -> &'m ProcessModel {
        self.model
    }

    /// Advance to W_{k+1} and return X_{k+1}.
    #[inline]
    pub fn step(&mut self) -> f64 {
        let x = match &mut self.kind {
            Kind::Zero => 0.0,
            Kind::Chain(state) => {
                let ProcessModel::Chain(c) = self.model else {
                    unreachable!()
                };
                *state = c.next_state(*state, self.rng.next_u64());
                c.g[*state]
            }
            Kind::Dyadic { bits, pool, left } => {
                let ProcessModel::BernoulliShift(b) = self.model else {
                    unreachable!()
                };
                if *left == 0 {
                    *pool = self.rng.next_u64();
                    *left = 64;
                }
                let bit = *pool & 1;
                *pool >>= 1;
                *left -= 1;
                *bits = (*bits >> 1) | (bit << 63);
                b.functional.eval_bits(*bits)
            }
            Kind::Linear {
                coeffs,
                innovation,
                ring,
                head,
                xi_prev,
            } => {
                let len = coeffs.len();
                let e = draw(*innovation, &mut self.rng, xi_prev);
                *head = if *head == 0 { len - 1 } else { *head - 1 };
                ring[*head] = e;
                ring[*head + len] = e;
                dot_seq(coeffs, &ring[*head..*head + len])
            }
        };
        self.last = x;
        x
    }

    /// The current state W_k.
    #[inline]
    pub fn state(&self) -> StateRef<'_> {
        match &self.kind {
            Kind::Zero => StateRef::None,
            Kind::Chain(i) => StateRef::Chain(*i),
            Kind::Dyadic { bits, .. } => StateRef::Dyadic(*bits),
            Kind::Linear { coeffs, ring, head, .. } => StateRef::Window(&ring[*head..*head + coeffs.len()]),
        }
    }

    /// The most recent X, 0 before the first step.
    pub fn last(&self) -> f64 {
        self.last
    }
}

/// A stored path X_1..X_N with enough state to evaluate functions of W_k.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub model: String,
    pub seed: u64,
    pub x: Vec<f64>,
    pub states: Option<StateTrace>,
    /// ε_N, ε_{N−1}, …, ε_{−J}, newest first so every window is a slice.
    innovations_rev: Option<Vec<f64>>,
    window: usize,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Length J + 1 of the innovation window (0 when none is stored).
    pub fn window_len(&self) -> usize {
        self.window
    }

    /// ε_k for −J ≤ k ≤ N.
    pub fn innovation(&self, k: i64) -> Option<f64> {
        let rev = self.innovations_rev.as_ref()?;
        let idx = self.x.len() as i64 - k;
        (idx >= 0).then(|| rev.get(idx as usize).copied()).flatten()
    }

    /// ε_{−J}..ε_N, oldest first.
    pub fn innovations(&self) -> Option<Vec<f64>> {
        self.innovations_rev.as_ref().map(|r| r.iter().rev().copied().collect())
    }

    /// W_k for 0 ≤ k ≤ N, or `None` when the path carries no state.
    pub fn state(&self, k: usize) -> Option<StateRef<'_>> {
        if k > self.x.len() {
            return None;
        }
        if let Some(rev) = &self.innovations_rev {
            let i = self.x.len() - k;
            return Some(StateRef::Window(&rev[i..i + self.window]));
        }
        match &self.states {
            Some(StateTrace::Chain(s)) => Some(StateRef::Chain(s[k] as usize)),
            Some(StateTrace::Dyadic(s)) => Some(StateRef::Dyadic(s[k])),
            None => (self.model == "zero").then_some(StateRef::None),
        }
    }

    /// Whether functions of W_k can be evaluated along the path.
    pub fn has_states(&self) -> bool {
        self.state(0).is_some()
    }
}

/// Simulate X_1..X_N from the stationary law.
pub fn sample_path(model: &ProcessModel, n: usize, seed: u64) -> Result<PathSample> {
    sample_path_with(model, n, StreamKey::new(seed, 0, StreamRole::Path), DEFAULT_WORK_BUDGET)
}

/// [`sample_path`] with explicit stream coordinates and work budget.
pub fn sample_path_with(model: &ProcessModel, n: usize, key: StreamKey, budget: u64) -> Result<PathSample> {
    if n == 0 {
        return Err(Error::InvalidInput("path length must be at least 1".into()));
    }
    let cost = (n as u128 + 1) * model.step_cost() as u128;
    if cost > budget as u128 {
        return Err(Error::Budget(format!(
            "{n} steps of {model} cost {cost} work units, budget is {budget}"
        )));
    }
    let mut s = Sampler::seeded(model, key);
    let mut x = Vec::with_capacity(n);
    let (states, innovations_rev, window) = match model {
        ProcessModel::Zero => {
            x.resize(n, 0.0);
            (None, None, 0)
        }
        ProcessModel::Chain(_) => {
            let mut tr = Vec::with_capacity(n + 1);
            let StateRef::Chain(i) = s.state() else { unreachable!() };
            tr.push(i as u32);
            for _ in 0..n {
                x.push(s.step());
                let StateRef::Chain(i) = s.state() else { unreachable!() };
                tr.push(i as u32);
            }
            (Some(StateTrace::Chain(tr)), None, 0)
        }
        ProcessModel::BernoulliShift(_) => {
            let mut tr = Vec::with_capacity(n + 1);
            let StateRef::Dyadic(b) = s.state() else { unreachable!() };
            tr.push(b);
            for _ in 0..n {
                x.push(s.step());
                let StateRef::Dyadic(b) = s.state() else { unreachable!() };
                tr.push(b);
            }
            (Some(StateTrace::Dyadic(tr)), None, 0)
        }
        ProcessModel::Iid(_) | ProcessModel::Linear(_) => {
            let StateRef::Window(w) = s.state() else { unreachable!() };
            let len = w.len();
            let mut fwd: Vec<f64> = w.iter().rev().copied().collect();
            fwd.reserve(n);
            for _ in 0..n {
                x.push(s.step());
                let StateRef::Window(w) = s.state() else { unreachable!() };
                fwd.push(w[0]);
            }
            fwd.reverse();
            (None, Some(fwd), len)
        }
    };
    Ok(PathSample {
        model: model.to_string(),
        seed: key.master_seed,
        x,
        states,
        innovations_rev,
        window,
    })
}

/// CSV with columns k, x_k and, for chains and Bernoulli shifts, w_k.
pub fn write_path_csv<W: Write>(path: &PathSample, mut out: W) -> io::Result<()> {
    match &path.states {
        None => {
            writeln!(out, "k,x_k")?;
            for (i, x) in path.x.iter().enumerate() {
                writeln!(out, "{},{x:.16e}", i + 1)?;
            }
        }
        Some(StateTrace::Chain(s)) => {
            writeln!(out, "k,x_k,w_k")?;
            for (i, x) in path.x.iter().enumerate() {
                writeln!(out, "{},{x:.16e},{}", i + 1, s[i + 1])?;
            }
        }
        Some(StateTrace::Dyadic(s)) => {
            writeln!(out, "k,x_k,w_k")?;
            for (i, x) in path.x.iter().enumerate() {
                writeln!(out, "{},{x:.16e},{:.16e}", i + 1, bits_to_unit(s[i + 1]))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{apply_q, StateFn};

    fn model(s: &str) -> ProcessModel {
        s.parse().unwrap()
    }

    #[test]
    fn deterministic_given_seed() {
        for spec in [
            "iid:normal",
            "geom:kappa=0.5@mds",
            "chain2:p=0.25,q=0.25",
            "bshift:indicator",
        ] {
            let m = model(spec);
            let a = sample_path(&m, 1000, 9).unwrap();
            assert_eq!(a, sample_path(&m, 1000, 9).unwrap());
            assert_ne!(a.x, sample_path(&m, 1000, 10).unwrap().x);
        }
    }

    #[test]
    fn states_reproduce_x_exactly() {
        for spec in [
            "iid:uniform",
            "ma:1,-0.5,0.25",
            "geom:kappa=0.7",
            "chain:P=0.5,0.5/0.25,0.75;g=2,-1",
            "bshift:affine:3",
            "bshift:indicator:0.3",
        ] {
            let m = model(spec);
            let p = sample_path(&m, 500, 1).unwrap();
            let g = m.g();
            for k in 1..=p.len() {
                assert_eq!(g.eval(p.state(k).unwrap()), p.x[k - 1], "{spec} at {k}");
            }
        }
    }

    #[test]
    fn bernoulli_recursion_is_exact() {
        let m = model("bshift:affine");
        let p = sample_path(&m, 10_000, 5).unwrap();
        let Some(StateTrace::Dyadic(w)) = &p.states else {
            panic!()
        };
        for k in 0..p.len() {
            // the entering bit is the top bit of W_{k+1}
            let eps = w[k + 1] >> 63;
            // 2 W_{k+1} = W_k + ε_{k+1} in units of 2⁻⁶⁴, once the bit that
            // falls off the 64-bit window is dropped
            let lhs = 2 * w[k + 1] as u128;
            let rhs = (w[k] & !1) as u128 + ((eps as u128) << 64);
            assert_eq!(lhs, rhs);
            if k >= 64 {
                // and the whole state is the last 64 entering bits
                let rebuilt = (0..64).fold(0u64, |acc, j| acc | ((w[k + 1 - j] >> 63) << (63 - j)));
                assert_eq!(rebuilt, w[k + 1]);
            }
        }
    }

    #[test]
    fn chain_occupancy() {
        let m = model("chain2:p=0.25,q=0.25");
        let n = 1_000_000;
        let p = sample_path(&m, n, 3).unwrap();
        let Some(StateTrace::Chain(s)) = &p.states else {
            panic!()
        };
        let occ = s[1..].iter().filter(|&&i| i == 0).count() as f64 / n as f64;
        // integrated autocorrelation time of the indicator is (1 + 1/2)/(1 − 1/2) = 3
        let se = (0.25 * 3.0 / n as f64).sqrt();
        assert!((occ - 0.5).abs() < 3.0 * se, "{occ}");
    }

    #[test]
    fn innovations_window_matches_state() {
        let m = model("ma:1,1");
        let p = sample_path(&m, 10, 2).unwrap();
        assert_eq!(p.window_len(), 2);
        let e = p.innovations().unwrap();
        assert_eq!(e.len(), 12);
        for k in 1..=10i64 {
            let x = p.innovation(k).unwrap() + p.innovation(k - 1).unwrap();
            assert_eq!(x, p.x[k as usize - 1]);
        }
        assert!(p.innovation(-2).is_none());
        let q = apply_q(&m, &m.g()).unwrap();
        assert_eq!(q, StateFn::Linear(vec![1.0]));
        assert_eq!(q.eval(p.state(3).unwrap()), p.innovation(3).unwrap());
    }

    #[test]
    fn budget_and_length_checks() {
        let m = model("iid:normal");
        assert!(sample_path(&m, 0, 1).is_err());
        assert!(sample_path_with(&m, 100, StreamKey::new(1, 0, StreamRole::Path), 50).is_err());
    }

    #[test]
    fn fixed_starts() {
        let m = model("chain2:p=0.25,q=0.25");
        let mut init = crate::rng::path_rng(0);
        let s = Sampler::new(&m, StartState::Chain(1), &mut init, crate::rng::path_rng(1)).unwrap();
        assert_eq!(s.state(), StateRef::Chain(1));
        assert!(Sampler::new(&m, StartState::Chain(2), &mut init, crate::rng::path_rng(1)).is_err());
        assert!(Sampler::new(&m, StartState::Dyadic(0), &mut init, crate::rng::path_rng(1)).is_err());
        let b = model("bshift:affine");
        let s = Sampler::new(&b, StartState::Dyadic(1 << 63), &mut init, crate::rng::path_rng(1)).unwrap();
        assert_eq!(s.state(), StateRef::Dyadic(1 << 63));
    }

    #[test]
    fn csv_layout() {
        let m = model("chain2:p=0.25,q=0.25");
        let p = sample_path(&m, 3, 4).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "k,x_k,w_k");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
    }
}
