use stationary_lil::conditions::{
    cond_norm_seq, dyadic_check, linear_criterion, mw_series, mw_series_from, HWeight, NestedMc, NormMode, Verdict,
};
use stationary_lil::processes::ProcessModel;
use stationary_lil::SlowlyVaryingSpec;

fn model(s: &str) -> ProcessModel {
    s.parse().unwrap()
}

#[test]
fn ma1_and_iid_reports() {
    let ell = SlowlyVaryingSpec::one_vee_log();
    let v = cond_norm_seq(&model("ma:1,1"), 5_000, NormMode::Exact, None).unwrap();
    assert!(v.values.iter().all(|&x| x == 1.0));
    let (mw2, zw5) = mw_series(&v, ell).unwrap();
    assert_eq!(mw2.verdict, Verdict::ConvergesCertified);
    assert_eq!(zw5.verdict, Verdict::ConvergesCertified);
    assert!(zw5.partial_sums.windows(2).all(|w| w[1].1 >= w[0].1));
    let v = cond_norm_seq(&model("iid:uniform"), 100, NormMode::Exact, None).unwrap();
    assert!(v.values.iter().all(|&x| x == 0.0));
    assert_eq!(mw_series(&v, ell).unwrap().1.verdict, Verdict::ConvergesCertified);
}

#[test]
fn monte_carlo_matches_exact_on_chains() {
    let m = model("chain:P=0.5,0.5/0.25,0.75;g=2,-1");
    let exact = cond_norm_seq(&m, 100, NormMode::Exact, None).unwrap();
    let mc = cond_norm_seq(
        &m,
        100,
        NormMode::MonteCarlo,
        Some(NestedMc {
            outer: 400,
            inner: 64,
            seed: 5,
        }),
    )
    .unwrap();
    for n in [1, 10, 100] {
        let (e, x, se) = (exact.get(n), mc.get(n), mc.errors[n - 1]);
        assert!((e - x).abs() <= 4.0 * se, "n = {n}: {e} vs {x} ± {se}");
    }
    assert!(cond_norm_seq(
        &model("ma:1,1"),
        10,
        NormMode::MonteCarlo,
        Some(NestedMc {
            outer: 4,
            inner: 4,
            seed: 0
        })
    )
    .is_err());
}

#[test]
fn domination_is_sound() {
    let ell = SlowlyVaryingSpec::one_vee_log();
    let chain = cond_norm_seq(&model("chain2:p=0.25,q=0.25"), 5_000, NormMode::Exact, None).unwrap();
    let ones = vec![1.0; 5_000];
    let (c2, c5) = mw_series(&chain, ell).unwrap();
    let (o2, o5) = mw_series_from(&ones, Some(1.0), ell, "1").unwrap();
    assert_eq!(c5.verdict, Verdict::ConvergesCertified);
    assert!(c2.verdict.rank() >= o2.verdict.rank() && c5.verdict.rank() >= o5.verdict.rank());
    let roots: Vec<f64> = (1..=5_000).map(|n| (n as f64).sqrt()).collect();
    let (r2, _) = mw_series_from(&roots, None, ell, "sqrt").unwrap();
    assert!(o2.verdict.rank() >= r2.verdict.rank());
}

#[test]
fn dyadic_agrees_with_full_series_on_the_chain() {
    let ell = SlowlyVaryingSpec::one_vee_log();
    let v = cond_norm_seq(&model("chain2:p=0.25,q=0.25"), 1 << 16, NormMode::Exact, None).unwrap();
    let dy: Vec<f64> = (0..=16).map(|r| v.get(1 << r)).collect();
    let rep = dyadic_check(&dy, HWeight::default(), Some(&v.values), v.uniform_bound).unwrap();
    assert!(rep.verdict.converges());
    assert_eq!(rep.verdict, mw_series(&v, ell).unwrap().1.verdict);
}

#[test]
fn lin21_flips_at_five_halves() {
    let verdicts: Vec<bool> = [2.0, 2.4, 2.5, 2.6, 3.0]
        .iter()
        .map(|&b| {
            linear_criterion(SlowlyVaryingSpec::log_power(b).unwrap(), 1.5, 100_000)
                .unwrap()
                .verdict
                .converges()
        })
        .collect();
    assert_eq!(verdicts, [false, false, false, true, true]);
}
