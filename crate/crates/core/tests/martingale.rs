use stationary_lil::martingale::{
    decompose, epsilon_for, martingale_residual_check, resolvent_h, sigma2, Sigma2Budget, Sigma2Method,
};
use stationary_lil::processes::{sample_path, ProcessModel};

fn model(s: &str) -> ProcessModel {
    s.parse().unwrap()
}

#[test]
fn identity_on_every_family() {
    for spec in [
        "iid:normal",
        "geom:kappa=0.6@mds",
        "chain:P=0.5,0.5/0.25,0.75;g=2,-1",
        "bshift:affine",
        "zero",
    ] {
        let m = model(spec);
        for seed in 0..3 {
            let p = sample_path(&m, 20_000, seed).unwrap();
            let d = decompose(&p, &m, epsilon_for(20_000).unwrap()).unwrap();
            assert!(d.identity_holds(), "{spec}/{seed}: {}", d.max_identity_residual);
        }
    }
}

#[test]
fn resolvent_residuals() {
    for spec in [
        "iid:uniform",
        "ma:1,-1,0.5",
        "chain2:p=0.1,q=0.3",
        "bshift:affine:3",
        "bshift:indicator:0.3",
    ] {
        let m = model(spec);
        for eps in [0.5, 1e-3, 1e-6] {
            let r = resolvent_h(&m, eps).unwrap();
            assert!(r.residual_bound <= 1e-12, "{spec} at {eps}: {}", r.residual_bound);
        }
    }
}

#[test]
fn bernoulli_increments_have_mean_zero() {
    let r = martingale_residual_check(&model("bshift:affine"), 1e-3, 1_000_000, 6).unwrap();
    assert!(!r.exact);
    assert!(r.value <= 4.0 * r.std_error, "{} ± {}", r.value, r.std_error);
}

#[test]
fn sigma2_methods_agree() {
    for (spec, target) in [
        ("chain2:p=0.25,q=0.25", 3.0),
        ("bshift:affine", 0.25),
        ("iid:normal", 1.0),
    ] {
        let m = model(spec);
        let budget = Sigma2Budget {
            n: 1_000,
            reps: 20_000,
            seed: 2,
        };
        let rate = sigma2(&m, Sigma2Method::VarianceRate, budget).unwrap();
        let inc = sigma2(&m, Sigma2Method::Increment, budget).unwrap();
        let se = (rate.std_error.powi(2) + inc.std_error.powi(2)).sqrt();
        assert!(
            (rate.value - inc.value).abs() <= 3.0 * se,
            "{spec}: {} vs {} ± {se}",
            rate.value,
            inc.value
        );
        assert!((inc.value / target - 1.0).abs() < 0.01, "{spec}: {}", inc.value);
    }
}

#[test]
fn sigma2_is_reproducible() {
    let m = model("chain2:p=0.25,q=0.25");
    let b = Sigma2Budget {
        n: 100,
        reps: 100,
        seed: 7,
    };
    let a = sigma2(&m, Sigma2Method::VarianceRate, b).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| sigma2(&m, Sigma2Method::VarianceRate, b).unwrap());
    assert_eq!(a, c);
}
