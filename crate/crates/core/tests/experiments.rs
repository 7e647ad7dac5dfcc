use stationary_lil::experiments::ks::{ks_scale, ks_two_sample};
use stationary_lil::experiments::{
    remainder_growth, remainder_growth_with, run_cclt, run_flil, run_lil, run_lil_flil, RemainderForm,
};
use stationary_lil::processes::{ProcessModel, Sampler, StartState};
use stationary_lil::rng::{StreamKey, StreamRole};

fn model(s: &str) -> ProcessModel {
    s.parse().unwrap()
}

#[test]
fn zero_process_is_degenerate_everywhere() {
    let z = model("zero");
    let (lil, flil) = run_lil_flil(&z, &[1_000, 5_000], 3, 1, 0.0).unwrap();
    assert!(lil.replications.iter().all(|r| r.peak == 0.0 && r.terminal == 0.0));
    assert_eq!(lil.normalized_peaks.median, 0.0);
    for a in &flil.aggregates {
        assert_eq!((a.pooled.endpoint, a.pooled.integral, a.pooled.sup), (0.0, 0.0, 0.0));
    }
    let c = run_cclt(&z, &[], 1_000, 10, 1, 0.0).unwrap();
    assert!(c.degenerate);
    assert_eq!(c.results[0].ks, 0.0);
    let r = remainder_growth(&z, &[100, 1_000], 2, 1).unwrap();
    assert!(r.rungs.iter().all(|g| g.median == 0.0));
}

#[test]
fn zero_sigma_needs_the_zero_process() {
    assert!(run_lil(&model("iid:normal"), 1_000, 2, 1, 0.0).is_err());
    assert!(run_lil(&model("iid:normal"), 999, 2, 1, 1.0).is_err());
}

#[test]
fn peaks_grow_with_the_horizon() {
    let m = model("bshift:affine");
    let short = run_lil(&m, 10_000, 16, 9, 0.5).unwrap();
    let long = run_lil(&m, 100_000, 16, 9, 0.5).unwrap();
    for (a, b) in short.replications.iter().zip(&long.replications) {
        assert!(b.peak >= a.peak);
        if b.peak_at <= 10_000 {
            assert_eq!(a.peak, b.peak);
        }
    }
}

#[test]
fn flil_knots_and_running_maxima() {
    let f = run_flil(&model("iid:normal"), &[1_000, 10_000, 100_000], 8, 3, 1.0).unwrap();
    assert_eq!(f.max_knot_error, 0.0);
    for r in &f.replications {
        for w in r.running.windows(2) {
            assert!(w[1].endpoint >= w[0].endpoint && w[1].integral >= w[0].integral && w[1].sup >= w[0].sup);
        }
        for g in &r.rungs {
            assert!(g.sup >= g.endpoint.max(0.0));
        }
    }
    assert!((f.targets.integral - 1.0 / 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn reports_do_not_depend_on_the_pool() {
    let m = model("chain2:p=0.1,q=0.3");
    let run = || {
        (
            run_lil_flil(&m, &[1_000, 4_000], 6, 5, 1.0).unwrap(),
            run_cclt(&m, &[], 1_000, 50, 5, 1.0).unwrap(),
            remainder_growth(&m, &[100, 1_000], 6, 5).unwrap(),
        )
    };
    let a = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(a, b);
}

#[test]
fn iid_conditional_clt_is_the_unconditional_one() {
    let m = model("iid:normal");
    let c = run_cclt(&m, &[StartState::Chain(0)], 1_000, 4_000, 8, 1.0).unwrap();
    let r = &c.results[0];
    assert!(!r.conditioned);
    assert!(r.ks < r.ks_null_99, "{} vs {}", r.ks, r.ks_null_99);
    assert!(r.marginals.iter().all(|g| (0.0..=1.0).contains(&g.ks)));
    assert!(run_cclt(&model("ma:1,1"), &[StartState::Chain(0)], 1_000, 10, 8, 2.0).is_err());
}

#[test]
fn conditional_starts_mixed_by_pi_give_the_stationary_law() {
    // π = (3/4, 1/4)
    let m = model("chain2:p=0.1,q=0.3");
    let n = 1_000;
    let mut pooled = run_cclt(&m, &[StartState::Chain(0)], n, 3_000, 1, 1.0).unwrap().results[0]
        .values
        .clone();
    pooled.extend(
        run_cclt(&m, &[StartState::Chain(1)], n, 1_000, 2, 1.0).unwrap().results[0]
            .values
            .iter(),
    );
    let free: Vec<f64> = (0..4_000)
        .map(|rep| {
            let mut s = Sampler::seeded(&m, StreamKey::new(3, rep, StreamRole::Path));
            (0..n).map(|_| s.step()).sum::<f64>() / (n as f64).sqrt()
        })
        .collect();
    let d = ks_two_sample(&pooled, &free);
    assert!(d <= 4.0 * ks_scale(pooled.len(), free.len()), "{d}");
}

#[test]
fn chain_cclt_per_start() {
    let m = model("chain2:p=0.25,q=0.25");
    let c = run_cclt(&m, &[], 2_000, 2_000, 4, 3f64.sqrt()).unwrap();
    assert_eq!(c.results.len(), 2);
    for r in &c.results {
        assert!(r.conditioned);
        assert!(r.ks <= 0.05, "{}: {}", r.start, r.ks);
    }
}

#[test]
fn remainder_of_iid_and_chain() {
    let iid = remainder_growth_with(&model("iid:normal"), &[100, 1_000], 4, 1, RemainderForm::Limit).unwrap();
    assert!(iid.rungs.iter().all(|g| g.values.iter().all(|&v| v == 0.0)));
    let chain = model("chain2:p=0.25,q=0.25");
    let lim = remainder_growth_with(&chain, &[1_000, 100_000], 8, 1, RemainderForm::Limit).unwrap();
    for g in &lim.rungs {
        let b = g.bound.unwrap();
        assert!(g.values.iter().all(|&v| v <= b), "{} > {b}", g.q90);
    }
    assert!(lim.rungs[1].bound.unwrap() < 0.063);
    let eps = remainder_growth(&chain, &[1_000, 100_000], 8, 1).unwrap();
    assert!(eps.rungs[1].median < eps.rungs[0].median);
}
