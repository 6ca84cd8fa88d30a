use pathfx_core::data::PairData;
use pathfx_core::estimators::{self, BetaKind, EffectScale, EstimationConfig, EstimatorKind};
use pathfx_core::inference::{
    bootstrap, bootstrap_replicate, g_gradient, interval_from_replicates, mle_sandwich_variance, percentile_interval,
    BootstrapKind, BootstrapSpec, WildWeights,
};
use pathfx_core::nuisance::{self, Pathway, Role, StabilizeFlags};
use pathfx_core::simulation::{draw_dataset, working_models_for, Regime};
use proptest::prelude::*;

fn cfg() -> EstimationConfig {
    EstimationConfig { models: working_models_for(Regime::Int), pathway: Pathway::Linear, stabilize: StabilizeFlags::NONE }
}

fn effect(pd: &PairData, w: Option<&[f64]>) -> Result<f64, estimators::EstimateError> {
    let kind = EstimatorKind::with_default_delta(BetaKind::Mr);
    estimators::estimate(pd, &cfg(), kind, EffectScale::MeanDifference, w).map(|r| r.effect)
}

fn spec(kind: BootstrapKind, b: usize) -> BootstrapSpec {
    BootstrapSpec { kind, replicates: b, seed: 42, ci_level: 0.95 }
}

#[test]
fn unit_wild_weights_reproduce_the_point_estimate() {
    let pd = PairData::from_coded(draw_dataset(400, 1)).unwrap();
    let point = effect(&pd, None).unwrap();
    let iv = bootstrap(&pd, point, &spec(BootstrapKind::Wild(WildWeights::Unit), 5), effect).unwrap();
    assert!(iv.replicate_values.iter().all(|v| (v - point).abs() < 1e-12));
}

#[test]
fn constant_pipeline_gives_a_degenerate_interval() {
    let pd = PairData::from_coded(draw_dataset(100, 2)).unwrap();
    for kind in [BootstrapKind::Nonparametric, BootstrapKind::Wild(WildWeights::Exp1)] {
        let iv = bootstrap(&pd, 3.5, &spec(kind, 20), |_: &PairData, _: Option<&[f64]>| Ok::<_, String>(3.5)).unwrap();
        assert_eq!((iv.lower, iv.upper, iv.se), (3.5, 3.5, 0.0));
    }
}

#[test]
fn replicates_are_deterministic_and_order_free() {
    let pd = PairData::from_coded(draw_dataset(300, 3)).unwrap();
    let s = spec(BootstrapKind::Wild(WildWeights::Exp1), 6);
    let forward: Vec<_> = (0..6).map(|r| (r, bootstrap_replicate(&pd, &s, r, &effect))).collect();
    let backward: Vec<_> = (0..6).rev().map(|r| (r, bootstrap_replicate(&pd, &s, r, &effect))).collect();
    let a = interval_from_replicates(0.0, &s, forward).unwrap();
    let b = interval_from_replicates(0.0, &s, backward).unwrap();
    assert_eq!(a, b);
    let c = bootstrap(&pd, 0.0, &s, effect).unwrap();
    assert_eq!(a.replicate_values, c.replicate_values);
}

#[test]
fn too_many_failures_abort() {
    let pd = PairData::from_coded(draw_dataset(50, 4)).unwrap();
    let s = spec(BootstrapKind::Nonparametric, 20);
    let flaky = |d: &PairData, _: Option<&[f64]>| {
        if d.data().records()[0].y > 0.0 { Err("fail") } else { Ok(1.0) }
    };
    let out = bootstrap(&pd, 1.0, &s, flaky);
    assert!(matches!(out, Err(pathfx_core::inference::InferenceError::TooManyFailures { .. })), "{out:?}");
}

proptest! {
    #[test]
    fn percentile_interval_widens_with_level(v in prop::collection::vec(-1e3f64..1e3, 2..200), l1 in 0.01f64..0.99, l2 in 0.01f64..0.99) {
        let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
        let (a, b) = percentile_interval(&v, lo).unwrap();
        let (c, d) = percentile_interval(&v, hi).unwrap();
        prop_assert!(c <= a && b <= d && a <= b);
    }
}

#[test]
fn finite_difference_gradient_predicts_perturbations() {
    let pd = PairData::from_coded(draw_dataset(1000, 6)).unwrap();
    let fits = nuisance::fit_nuisances(&pd, &cfg().models, Pathway::Linear, None).unwrap();
    let g = |f: &nuisance::NuisanceFits| pd.data().records().iter().map(|r| f.b_double_prime(r)).sum::<f64>() / 1000.0;
    let base = g(&fits);
    for role in [Role::Outcome, Role::Mediator, Role::C1Mean(1)] {
        let d = g_gradient(&pd, &fits, role);
        for h in [1e-3, 1e-4] {
            let mut p = fits.clone();
            let coef = match role {
                Role::Outcome => &mut p.outcome.coefficients,
                Role::Mediator => &mut p.mediator.coefficients,
                Role::C1Mean(j) => &mut p.c1_means[j].coefficients,
                _ => unreachable!(),
            };
            let delta: Vec<f64> = (0..coef.len()).map(|k| h * (1.0 + k as f64 / 3.0)).collect();
            coef.iter_mut().zip(&delta).for_each(|(c, s)| *c += s);
            let linear: f64 = d.iter().zip(&delta).map(|(a, b)| a * b).sum();
            assert!((g(&p) - base - linear).abs() < 50.0 * h * h, "{role}: {} vs {linear}", g(&p) - base);
        }
    }
    let v = mle_sandwich_variance(&pd, &fits).unwrap();
    assert!(v > 0.0 && v < 1.0);
}
