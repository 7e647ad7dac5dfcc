use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use super::{check_sigma, lil_scale, normalize, Summary, LNLN3, MIN_HORIZON};
use crate::numeric::CompensatedSum;
use crate::processes::{ProcessModel, Sampler, DEFAULT_WORK_BUDGET};
use crate::rng::{StreamKey, StreamRole};
use crate::{Error, Result};

/// Number of knots per replication at which the polygonal path is checked.
const KNOTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LilReplication {
    pub replication: u64,
    /// max_{3≤n≤N} S_n / √(2n log log n), signed.
    pub peak: f64,
    pub peak_at: u64,
    /// S_N / √(2N log log N)
    pub terminal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LilReport {
    pub model: String,
    pub horizon: u64,
    pub reps: usize,
    pub seed: u64,
    pub sigma_ref: f64,
    pub replications: Vec<LilReplication>,
    /// Summary of peak / σ.
    pub normalized_peaks: Summary,
}

/// Endpoint θ_n(1), integral ∫θ_n and sup θ_n of the polygonal path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Functionals {
    pub endpoint: f64,
    pub integral: f64,
    pub sup: f64,
}

impl Functionals {
    fn max(self, o: Self) -> Self {
        Self {
            endpoint: self.endpoint.max(o.endpoint),
            integral: self.integral.max(o.integral),
            sup: self.sup.max(o.sup),
        }
    }

    fn scaled(self, sigma: f64) -> Self {
        Self {
            endpoint: normalize(self.endpoint, sigma),
            integral: normalize(self.integral, sigma),
            sup: normalize(self.sup, sigma),
        }
    }

    /// The extremes over K_σ: σ, σ/√3 and σ.
    pub fn targets(sigma: f64) -> Self {
        Self {
            endpoint: sigma,
            integral: sigma / 3f64.sqrt(),
            sup: sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlilReplication {
    pub replication: u64,
    /// Functionals of θ_n at each rung.
    pub rungs: Vec<Functionals>,
    /// Running maxima of the above along the ladder.
    pub running: Vec<Functionals>,
    /// Largest |θ_n(k/n) − S_k/√(2n log₂ n)| over the checked knots.
    pub knot_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlilAggregate {
    pub n: u64,
    /// Max over replications of the running maxima, divided by σ.
    pub pooled: Functionals,
    /// Median over replications of the running maxima, divided by σ.
    pub median: Functionals,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlilReport {
    pub model: String,
    pub ladder: Vec<u64>,
    pub reps: usize,
    pub seed: u64,
    pub sigma_ref: f64,
    /// Extremes over K_1, i.e. the targets after dividing by σ.
    pub targets: Functionals,
    pub replications: Vec<FlilReplication>,
    pub aggregates: Vec<FlilAggregate>,
    pub max_knot_error: f64,
}

struct Knot {
    k: u64,
    s_prev: f64,
    s: f64,
    x_next: f64,
}

/// θ_n at grid coordinate u = nt, from the two partial sums around it.
fn polygon(u: f64, k: u64, s_prev: f64, s: f64, x_next: f64, scale: f64) -> f64 {
    let j = u.floor();
    let frac = u - j;
    if j as u64 + 1 == k {
        (s_prev + frac * (s - s_prev)) / scale
    } else {
        (s + frac * x_next) / scale
    }
}

struct RepStats {
    lil: LilReplication,
    flil: FlilReplication,
}

fn stream_replication(model: &ProcessModel, seed: u64, rep: u64, ladder: &[u64]) -> RepStats {
    let horizon = *ladder.last().expect("non-empty ladder");
    let key = StreamKey::new(seed, rep, StreamRole::Path);
    let mut sampler = Sampler::seeded(model, key);

    let mut aux = StreamKey::new(seed, rep, StreamRole::Auxiliary).rng();
    let mut knot_at: Vec<u64> = (0..KNOTS).map(|_| 1 + aux.next_u64() % (horizon - 1)).collect();
    knot_at.sort_unstable();
    knot_at.dedup();
    let mut knots: Vec<Knot> = Vec::with_capacity(knot_at.len());
    let mut next_knot = 0usize;

    // lower bounds for log log n on [2^b, 2^{b+1})
    let lnln_lo: Vec<f64> = (0..64).map(|b| ((2f64.powi(b)).ln().ln()).max(LNLN3)).collect();

    let mut s = CompensatedSum::new();
    let mut sum_s = CompensatedSum::new();
    let mut max_s = 0.0f64;
    let (mut peak, mut peak_at) = (f64::NEG_INFINITY, 0u64);
    let mut rungs = Vec::with_capacity(ladder.len());
    let mut rung = 0usize;
    let mut s_prev = 0.0;
    let mut pending: Option<usize> = None;

    for n in 1..=horizon {
        let x = sampler.step();
        if let Some(i) = pending.take() {
            knots[i].x_next = x;
        }
        s.add(x);
        let sn = s.value();
        sum_s.add(sn);
        max_s = max_s.max(sn);

        let nf = n as f64;
        if n >= 3 {
            let candidate = if sn > 0.0 {
                !(peak >= 0.0 && sn * sn <= peak * peak * 2.0 * nf * lnln_lo[63 - n.leading_zeros() as usize])
            } else {
                peak < 0.0
            };
            if candidate {
                let r = sn / lil_scale(n);
                if r > peak {
                    peak = r;
                    peak_at = n;
                }
            }
        }

        if next_knot < knot_at.len() && knot_at[next_knot] == n {
            knots.push(Knot {
                k: n,
                s_prev,
                s: sn,
                x_next: 0.0,
            });
            pending = Some(knots.len() - 1);
            next_knot += 1;
        }

        if rung < ladder.len() && ladder[rung] == n {
            let scale = lil_scale(n);
            rungs.push(Functionals {
                endpoint: sn / scale,
                integral: (sum_s.value() - 0.5 * sn) / (nf * scale),
                sup: max_s / scale,
            });
            rung += 1;
        }
        s_prev = sn;
    }

    let scale = lil_scale(horizon);
    let knot_error = knots
        .iter()
        .map(|k| (polygon(k.k as f64, k.k, k.s_prev, k.s, k.x_next, scale) - k.s / scale).abs())
        .fold(0.0, f64::max);

    let mut running = Vec::with_capacity(rungs.len());
    for f in &rungs {
        running.push(match running.last() {
            Some(&prev) => f.max(prev),
            None => *f,
        });
    }

    RepStats {
        lil: LilReplication {
            replication: rep,
            peak,
            peak_at,
            terminal: s.value() / scale,
        },
        flil: FlilReplication {
            replication: rep,
            rungs,
            running,
            knot_error,
        },
    }
}

fn validate(model: &ProcessModel, ladder: &[u64], reps: usize) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidInput("empty horizon ladder".into()));
    }
    if ladder[0] < MIN_HORIZON {
        return Err(Error::InvalidInput(format!(
            "horizons must be at least {MIN_HORIZON}, got {}",
            ladder[0]
        )));
    }
    if ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("horizon ladder must be strictly increasing".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("at least one replication is needed".into()));
    }
    let top = *ladder.last().unwrap();
    if top.saturating_mul(model.step_cost()) > DEFAULT_WORK_BUDGET {
        return Err(Error::Budget(format!("{top} steps of {model} exceed the work budget")));
    }
    Ok(())
}

/// LIL peaks and FLIL functionals from the same streams; the LIL horizon is
/// the top of the ladder.
pub fn run_lil_flil(
    model: &ProcessModel,
    ladder: &[u64],
    reps: usize,
    seed: u64,
    sigma_ref: f64,
) -> Result<(LilReport, FlilReport)> {
    validate(model, ladder, reps)?;
    check_sigma(model, sigma_ref)?;
    let stats: Vec<RepStats> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| stream_replication(model, seed, rep, ladder))
        .collect();
    let (lil, flil): (Vec<_>, Vec<_>) = stats.into_iter().map(|r| (r.lil, r.flil)).unzip();

    let normalized: Vec<f64> = lil.iter().map(|r| normalize(r.peak, sigma_ref)).collect();
    let lil_report = LilReport {
        model: model.to_string(),
        horizon: *ladder.last().unwrap(),
        reps,
        seed,
        sigma_ref,
        replications: lil,
        normalized_peaks: Summary::of(&normalized),
    };

    let aggregates = ladder
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let col = |f: fn(&Functionals) -> f64| -> Vec<f64> { flil.iter().map(|r| f(&r.running[i])).collect() };
            let pick = |f: fn(&Functionals) -> f64, g: fn(&Summary) -> f64| g(&Summary::of(&col(f)));
            let raw_pooled = Functionals {
                endpoint: pick(|f| f.endpoint, |s| s.max),
                integral: pick(|f| f.integral, |s| s.max),
                sup: pick(|f| f.sup, |s| s.max),
            };
            let raw_median = Functionals {
                endpoint: pick(|f| f.endpoint, |s| s.median),
                integral: pick(|f| f.integral, |s| s.median),
                sup: pick(|f| f.sup, |s| s.median),
            };
            FlilAggregate {
                n,
                pooled: raw_pooled.scaled(sigma_ref),
                median: raw_median.scaled(sigma_ref),
            }
        })
        .collect();
    let max_knot_error = flil.iter().map(|r| r.knot_error).fold(0.0, f64::max);
    let flil_report = FlilReport {
        model: model.to_string(),
        ladder: ladder.to_vec(),
        reps,
        seed,
        sigma_ref,
        targets: Functionals::targets(1.0),
        replications: flil,
        aggregates,
        max_knot_error,
    };
    Ok((lil_report, flil_report))
}

/// Peaks of S_n / √(2n log log n) over 3 ≤ n ≤ N.
pub fn run_lil(model: &ProcessModel, horizon: u64, reps: usize, seed: u64, sigma_ref: f64) -> Result<LilReport> {
    Ok(run_lil_flil(model, &[horizon], reps, seed, sigma_ref)?.0)
}

/// Functionals of θ_n along a ladder of horizons.
pub fn run_flil(model: &ProcessModel, ladder: &[u64], reps: usize, seed: u64, sigma_ref: f64) -> Result<FlilReport> {
    Ok(run_lil_flil(model, ladder, reps, seed, sigma_ref)?.1)
}
