use rayon::prelude::*;
use serde::Serialize;

use super::ks::{ks_normal, ks_null_quantile};
use super::{check_sigma, Summary, MIN_HORIZON};
use crate::numeric::CompensatedSum;
use crate::processes::{ProcessModel, Sampler, StartState, DEFAULT_WORK_BUDGET};
use crate::rng::{StreamKey, StreamRole};
use crate::{Error, Result};

/// Times at which the marginal of the partial-sum process is compared.
const MARGINAL_TIMES: [f64; 3] = [0.25, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalKs {
    pub t: f64,
    /// KS distance of S_{⌊nt⌋}/√n to N(0, σ²⌊nt⌋/n).
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcltResult {
    pub start: String,
    /// False when the model carries no state to condition on and the run
    /// is the unconditional one.
    pub conditioned: bool,
    /// KS distance of S_n/√n to N(0, σ²).
    pub ks: f64,
    /// 99% point of the KS null for this many replications.
    pub ks_null_99: f64,
    pub summary: Summary,
    pub marginals: Vec<MarginalKs>,
    /// S_n/√n per replication.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcltReport {
    pub model: String,
    pub n: u64,
    pub reps: usize,
    pub seed: u64,
    pub sigma_ref: f64,
    /// σ = 0: the target is the point mass at 0.
    pub degenerate: bool,
    pub results: Vec<CcltResult>,
}

/// The starts used when none are given: every chain state, w₀ = 1/2 for
/// the Bernoulli shift, the stationary start otherwise.
fn default_starts(model: &ProcessModel) -> Vec<StartState> {
    match model {
        ProcessModel::Chain(c) => (0..c.states()).map(StartState::Chain).collect(),
        ProcessModel::BernoulliShift(_) => vec![StartState::Dyadic(1 << 63)],
        _ => vec![StartState::Stationary],
    }
}

fn describe(start: StartState) -> String {
    match start {
        StartState::Stationary => "stationary".into(),
        StartState::Chain(i) => format!("state:{i}"),
        StartState::Dyadic(bits) => format!("dyadic:{bits:#018x}"),
    }
}

/// Conditional law of S_n/√n given W_0 = start, one result per start.
///
/// IID models have nothing to condition on and run unconditionally; fixed
/// starts on linear filters are rejected.
pub fn run_cclt(
    model: &ProcessModel,
    starts: &[StartState],
    n: u64,
    reps: usize,
    seed: u64,
    sigma_ref: f64,
) -> Result<CcltReport> {
    check_sigma(model, sigma_ref)?;
    if n < MIN_HORIZON {
        return Err(Error::InvalidInput(format!(
            "n must be at least {MIN_HORIZON}, got {n}"
        )));
    }
    if reps < 2 {
        return Err(Error::InvalidInput("at least two replications are needed".into()));
    }
    if n.saturating_mul(model.step_cost()) > DEFAULT_WORK_BUDGET {
        return Err(Error::Budget(format!("{n} steps of {model} exceed the work budget")));
    }
    let starts = if starts.is_empty() {
        default_starts(model)
    } else {
        starts.to_vec()
    };
    let iid = matches!(model, ProcessModel::Iid(_));
    for &s in &starts {
        if s != StartState::Stationary && !iid && !model.supports_conditioning() {
            return Err(Error::InvalidInput(format!(
                "{model} carries no state to condition on; only the stationary start is available"
            )));
        }
    }

    let marks: Vec<u64> = MARGINAL_TIMES.iter().map(|t| (n as f64 * t).floor() as u64).collect();
    let root_n = (n as f64).sqrt();
    let mut results = Vec::with_capacity(starts.len());
    for (si, &start) in starts.iter().enumerate() {
        let effective = if iid { StartState::Stationary } else { start };
        let runs: Vec<[f64; 3]> = (0..reps as u64)
            .into_par_iter()
            .map(|rep| -> Result<[f64; 3]> {
                let mut init = StreamKey::new(seed, rep, StreamRole::InitialState)
                    .with_sub(si as u64)
                    .rng();
                let path = StreamKey::new(seed, rep, StreamRole::ConditionalPaths)
                    .with_sub(si as u64)
                    .rng();
                let mut sampler = Sampler::new(model, effective, &mut init, path)?;
                let mut s = CompensatedSum::new();
                let mut out = [0.0; 3];
                let mut m = 0;
                for k in 1..=n {
                    s.add(sampler.step());
                    while m < 3 && marks[m] == k {
                        out[m] = s.value() / root_n;
                        m += 1;
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let values: Vec<f64> = runs.iter().map(|r| r[2]).collect();
        let marginals = MARGINAL_TIMES
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let col: Vec<f64> = runs.iter().map(|r| r[i]).collect();
                let sd = sigma_ref * (marks[i] as f64 / n as f64).sqrt();
                MarginalKs {
                    t,
                    ks: ks_normal(&col, sd),
                }
            })
            .collect();
        results.push(CcltResult {
            start: describe(start),
            conditioned: !iid && start != StartState::Stationary,
            ks: ks_normal(&values, sigma_ref),
            ks_null_99: ks_null_quantile(reps, 0.99),
            summary: Summary::of(&values),
            marginals,
            values,
        });
    }
    Ok(CcltReport {
        model: model.to_string(),
        n,
        reps,
        seed,
        sigma_ref,
        degenerate: sigma_ref == 0.0,
        results,
    })
}
