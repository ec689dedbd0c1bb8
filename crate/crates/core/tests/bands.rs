use certband_core::crossing::{calibrate_dkw, noncrossing_probability};
use certband_core::functional::{qbrm_interval, qbrm_lower, qbrm_upper, transform_abs, ValueInterval};
use certband_core::measures::{generalized_entropy_upper, gini_lower, gini_upper, mean_lower, mean_upper};
use certband_core::multidim::{build_marginal_bands, multidim_band_query, multidim_dkw_radius, BudgetSplit};
use certband_core::selection::{
    select_hypothesis, HypothesisLossTable, MeasureSpec, ObjectiveSpec, TermScope, TermSpec,
};
use certband_core::{
    build_band, exact_plugin_band, var_bounds, BandMethod, CdfBand, DistSpec, LossSamples, WeightFunction,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn beta_samples(n: usize, seed: u64) -> LossSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = DistSpec::Beta { a: 2.0, b: 5.0 }.sample(n, &mut rng);
    LossSamples::build(values, None, Some(1.0), true).unwrap()
}

fn methods() -> Vec<BandMethod> {
    vec![
        BandMethod::Dkw,
        BandMethod::berk_jones(),
        BandMethod::truncated_bj(0.1, 0.9),
    ]
}

#[test]
fn dkw_worked_values() {
    let l = calibrate_dkw(100, 0.05).unwrap();
    assert!((l.values()[49] - 0.364190).abs() < 1e-6);
    assert_eq!(l.values()[9], 0.0);
}

#[test]
fn bands_are_ordered_and_calibrated() {
    let samples = beta_samples(60, 1);
    for method in methods() {
        let band = build_band(&samples, &method, 0.1).unwrap();
        let l = band.bound_vector().unwrap();
        assert!(noncrossing_probability(l.values()).unwrap() >= 1.0 - l.delta() - 1e-12);
        for k in 0..=200 {
            let x = k as f64 / 200.0;
            let (lo, hi) = (band.lower().eval(x), band.upper().eval(x));
            assert!(lo <= hi + 1e-12, "{method:?} at {x}");
        }
        assert_eq!(band.upper().eval(1.0), 1.0);
    }
}

#[test]
fn band_json_round_trips() {
    let band = build_band(&beta_samples(30, 2), &BandMethod::berk_jones(), 0.1).unwrap();
    let text = serde_json::to_string(&band).unwrap();
    let back: CdfBand = serde_json::from_str(&text).unwrap();
    assert_eq!(back, band);
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}

#[test]
fn functionals_bracket_the_empirical_value() {
    let samples = beta_samples(80, 3);
    let mean = samples.values().iter().sum::<f64>() / samples.len() as f64;
    let band = build_band(&samples, &BandMethod::berk_jones(), 0.1).unwrap();
    let id = |x: f64| x;
    let hi = qbrm_upper(&band, &WeightFunction::ConstantOne, &id).unwrap();
    let lo = qbrm_lower(&band, &WeightFunction::ConstantOne, &id).unwrap();
    assert!(lo <= mean && mean <= hi);
    assert!((mean_upper(&band).unwrap() - hi).abs() < 1e-12);
    assert!((mean_lower(&band).unwrap() - lo).abs() < 1e-12);
    let iv = qbrm_interval(&band, &WeightFunction::cvar(0.9).unwrap(), &id).unwrap();
    assert!(iv.lo <= iv.hi);
    assert!(gini_lower(&band).unwrap().value <= gini_upper(&band).unwrap().value);
    let (v_lo, v_hi) = var_bounds(&band, 0.9).unwrap();
    assert!(v_lo <= v_hi);
}

#[test]
fn abs_transform_covers_zero_crossing() {
    let s = transform_abs(ValueInterval::new(-0.3, 0.2).unwrap());
    assert_eq!((s.lo, s.hi), (0.0, 0.3));
}

#[test]
fn selection_prefers_dominating_hypothesis() {
    let good: Vec<f64> = (0..50).map(|i| (i % 10) as f64 / 20.0).collect();
    let bad: Vec<f64> = good.iter().map(|v| v + 0.4).collect();
    let table = HypothesisLossTable::new(vec!["a".into(), "b".into()], vec![bad, good], None, Some(1.0), true).unwrap();
    let spec = ObjectiveSpec {
        terms: vec![TermSpec {
            measure: MeasureSpec::Mean,
            scope: TermScope::Population,
            coefficient: 1.0,
        }],
    };
    let report = select_hypothesis(&table, &spec, 0.1, &BandMethod::berk_jones()).unwrap();
    assert_eq!(report.selected.as_deref(), Some("b"));
}

#[test]
fn multidim_query_contains_empirical_cdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random(), rng.random()]).collect();
    assert!((multidim_dkw_radius(100, 2, 0.05).unwrap() - 0.20376).abs() < 1e-5);
    let bands = build_marginal_bands(&points, &BandMethod::Dkw, 0.05, BudgetSplit::TwoDelta).unwrap();
    let q = [0.5, 0.5];
    let iv = multidim_band_query(&points, &bands, 0.05, BudgetSplit::TwoDelta, &q).unwrap();
    let ecdf = points.iter().filter(|p| p[0] <= 0.5 && p[1] <= 0.5).count() as f64 / 100.0;
    assert!(iv.lo <= ecdf && ecdf <= iv.hi);
}

#[test]
fn generalized_entropy_half_on_uniform() {
    let band = exact_plugin_band(&DistSpec::Uniform, 10_000).unwrap();
    // (E[(X/μ)^α] - 1) / (α(α-1)) with E[sqrt(2X)] = 2·sqrt(2)/3
    let truth = (2.0 * 2f64.sqrt() / 3.0 - 1.0) / -0.25;
    let got = generalized_entropy_upper(&band, 0.5, None).unwrap().value;
    assert!((got - truth).abs() < 2e-3, "{got} vs {truth}");
    assert!((truth - 0.2288).abs() < 1e-4);
}
