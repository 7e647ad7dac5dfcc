use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lil_scale, quantile_sorted};
use crate::martingale::{epsilon_for, resolvent_h, resolvent_limit, Resolvent};
use crate::numeric::CompensatedSum;
use crate::processes::{ProcessModel, Sampler, StateFn, DEFAULT_WORK_BUDGET};
use crate::rng::{StreamKey, StreamRole};
use crate::{Error, Result};

/// Which resolvent defines R_k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderForm {
    /// h_ε at ε = epsilon_for(N) on each rung.
    Resolvent,
    /// ε = 0: R_k = Qh(W_0) − Qh(W_k).
    Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemainderRung {
    pub n: u64,
    pub epsilon: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    /// 2 sup|Qh| / √(2N log log N); only when R is a pure coboundary and
    /// Qh is bounded.
    pub bound: Option<f64>,
    /// max_{k≤N} |R_k| / √(2N log log N) per replication.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemainderGrowth {
    pub model: String,
    pub form: RemainderForm,
    pub reps: usize,
    pub seed: u64,
    pub rungs: Vec<RemainderRung>,
}

fn sup_norm(f: &StateFn) -> Option<f64> {
    match f {
        StateFn::Zero => Some(0.0),
        StateFn::Chain(v) => Some(v.iter().fold(0.0, |a, x| a.max(x.abs()))),
        _ => None,
    }
}

/// [`remainder_growth_with`] at ε = epsilon_for(N).
pub fn remainder_growth(model: &ProcessModel, ladder: &[u64], reps: usize, seed: u64) -> Result<RemainderGrowth> {
    remainder_growth_with(model, ladder, reps, seed, RemainderForm::Resolvent)
}

/// Median over replications of max_{k≤N} |R_k| / √(2N log log N) on each
/// rung. All rungs of a replication share one path.
pub fn remainder_growth_with(
    model: &ProcessModel,
    ladder: &[u64],
    reps: usize,
    seed: u64,
    form: RemainderForm,
) -> Result<RemainderGrowth> {
    if ladder.is_empty() || ladder[0] == 0 || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "ladder must be non-empty, positive and strictly increasing".into(),
        ));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("at least one replication is needed".into()));
    }
    let top = *ladder.last().unwrap();
    if top.saturating_mul(model.step_cost()) > DEFAULT_WORK_BUDGET {
        return Err(Error::Budget(format!("{top} steps of {model} exceed the work budget")));
    }
    let resolvents: Vec<Resolvent> = match form {
        RemainderForm::Resolvent => ladder
            .iter()
            .map(|&n| resolvent_h(model, epsilon_for(n)?))
            .collect::<Result<_>>()?,
        RemainderForm::Limit => {
            let r = resolvent_limit(model)?;
            vec![r; ladder.len()]
        }
    };

    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut sampler = Sampler::seeded(model, StreamKey::new(seed, rep, StreamRole::Path));
            let qh0: Vec<f64> = resolvents.iter().map(|r| r.qh.eval(sampler.state())).collect();
            let mut sh = vec![CompensatedSum::new(); ladder.len()];
            let mut worst = vec![0.0f64; ladder.len()];
            let mut first = 0;
            for k in 1..=top {
                sampler.step();
                while ladder[first] < k {
                    first += 1;
                }
                let w = sampler.state();
                for i in first..ladder.len() {
                    let res = &resolvents[i];
                    let r = if res.epsilon == 0.0 {
                        qh0[i] - res.qh.eval(w)
                    } else {
                        sh[i].add(res.h.eval(w));
                        res.epsilon * sh[i].value() + qh0[i] - res.qh.eval(w)
                    };
                    worst[i] = worst[i].max(r.abs());
                }
            }
            worst.iter().zip(ladder).map(|(m, &n)| m / lil_scale(n)).collect()
        })
        .collect();

    let rungs = ladder
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let values: Vec<f64> = per_rep.iter().map(|v| v[i]).collect();
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let res = &resolvents[i];
            let bound = if res.epsilon == 0.0 {
                sup_norm(&res.qh).map(|s| 2.0 * s / lil_scale(n))
            } else {
                None
            };
            RemainderRung {
                n,
                epsilon: res.epsilon,
                median: quantile_sorted(&sorted, 0.5),
                q10: quantile_sorted(&sorted, 0.1),
                q90: quantile_sorted(&sorted, 0.9),
                bound,
                values,
            }
        })
        .collect();
    Ok(RemainderGrowth {
        model: model.to_string(),
        form,
        reps,
        seed,
        rungs,
    })
}
