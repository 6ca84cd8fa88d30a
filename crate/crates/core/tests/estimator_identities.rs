use pathfx_core::data::{PairData, TreatmentPair};
use pathfx_core::estimators::{self, beta_a, beta_mr, delta_aipw_with, delta_ipw, EstimationConfig};
use pathfx_core::nuisance::{c1_ratio, m_ratio, Pathway, StabilizeFlags};
use pathfx_core::simulation::{self, draw_dataset, true_fits, working_models_for, Regime};
use proptest::prelude::*;

fn ln_normal(x: f64, mu: f64) -> f64 {
    -0.5 * (x - mu) * (x - mu)
}

#[test]
fn density_ratios_at_the_truth_match_normal_densities() {
    let fits = true_fits();
    let data = draw_dataset(500, 3);
    let a = simulation::C1_INTERCEPT;
    for (i, r) in data.records().iter().enumerate() {
        let c0 = r.c0[0];
        let mut log_c1 = 0.0;
        for j in 0..3 {
            let mu0 = a[j] + simulation::C1_C0[j] * c0;
            let mu1 = mu0 + simulation::C1_E[j] + simulation::C1_C0E[j] * c0;
            log_c1 += ln_normal(r.c1[j], mu1) - ln_normal(r.c1[j], mu0);
        }
        let z = simulation::ZETA;
        let nu0 = z[0] + z[1] * c0 + z[3] * r.c1[0] + z[4] * r.c1[1] + z[5] * r.c1[2];
        let nu1 = nu0 + z[2] + z[6] * r.c1[0];
        let log_m = ln_normal(r.m, nu1) - ln_normal(r.m, nu0);
        let cr = c1_ratio(&fits, r, i).unwrap();
        let mr = m_ratio(&fits, r, i).unwrap();
        assert!((cr / log_c1.exp() - 1.0).abs() < 1e-6, "row {i}: {cr} vs {}", log_c1.exp());
        assert!((mr / log_m.exp() - 1.0).abs() < 1e-6, "row {i}: {mr} vs {}", log_m.exp());
    }
}

#[test]
fn ratios_cancel_without_information() {
    // With no C1 terms the C1 propensity equals the base one and the ratio is 1.
    let mut fits = true_fits();
    let spec = pathfx_core::design::DesignSpec::parse(simulation::designs::LAMBDA_C, 1, 3).unwrap();
    let mut coef = vec![0.0; spec.len()];
    coef[0] = simulation::ALPHA[0];
    coef[1] = simulation::ALPHA[1];
    fits.propensity_c1 = pathfx_core::glm::FittedGlm::from_coefficients(pathfx_core::glm::Family::Logit, Some(spec), coef);
    for (i, r) in draw_dataset(50, 1).records().iter().enumerate() {
        assert!((c1_ratio(&fits, r, i).unwrap() - 1.0).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn identity_pair_collapses(seed in any::<u64>(), n in 300usize..900, level in 0u32..2, stab in any::<bool>()) {
        let data = draw_dataset(n, seed);
        let pd = PairData::prepare(&data, TreatmentPair::new(level, level), true).unwrap();
        let flags = if stab { StabilizeFlags::ALL } else { StabilizeFlags::NONE };
        let cfg = EstimationConfig { models: working_models_for(Regime::Int), pathway: Pathway::Linear, stabilize: flags };
        let (_, v) = estimators::fit_and_evaluate(&pd, &cfg, None).unwrap();
        prop_assert!(v.m_ratio.iter().chain(&v.c1_ratio).all(|r| *r == 1.0));
        let (a, ipw) = (beta_a(&v), delta_ipw(&v));
        prop_assert!((a - ipw).abs() < 1e-10, "{a} vs {ipw}");
        let (mr, aipw) = (beta_mr(&v), delta_aipw_with(&v, &v.b_double_prime));
        prop_assert!((mr - aipw).abs() < 1e-10, "{mr} vs {aipw}");
    }
}

#[test]
fn identity_pair_needs_the_flag() {
    let data = draw_dataset(100, 2);
    assert!(PairData::prepare(&data, TreatmentPair::new(1, 1), false).is_err());
}

#[test]
fn sequential_terms_vanish() {
    for (regime, seed) in [(Regime::Int, 11), (Regime::A, 12), (Regime::B, 13), (Regime::C, 14)] {
        for flags in [StabilizeFlags::NONE, StabilizeFlags::ALL] {
            let pd = PairData::from_coded(draw_dataset(2000, seed)).unwrap();
            let cfg = EstimationConfig { models: working_models_for(regime), pathway: Pathway::Linear, stabilize: flags };
            let s = estimators::beta_mr_sequential(&pd, &cfg, None).unwrap();
            for t in s.terms {
                assert!(t.abs() < 1e-8, "{regime} {flags:?}: {:?}", s.terms);
            }
            // With the terms at zero the multiply-robust form equals Pn B''.
            assert!((beta_mr(&s.values) - s.beta).abs() < 1e-8);
        }
    }
}

#[test]
fn row_weights_of_one_change_nothing() {
    let pd = PairData::from_coded(draw_dataset(700, 5)).unwrap();
    let cfg = EstimationConfig { models: working_models_for(Regime::Int), pathway: Pathway::Linear, stabilize: StabilizeFlags::ALL };
    let plain = estimators::estimate_all(&pd, &cfg, None, true).unwrap();
    let ones = vec![1.0; 700];
    let weighted = estimators::estimate_all(&pd, &cfg, Some(&ones), true).unwrap();
    for (a, b) in [(plain.mle, weighted.mle), (plain.a, weighted.a), (plain.b, weighted.b), (plain.mr, weighted.mr)] {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn efficient_influence_has_mean_zero_at_the_estimate() {
    let pd = PairData::from_coded(draw_dataset(800, 8)).unwrap();
    let cfg = EstimationConfig { models: working_models_for(Regime::Int), pathway: Pathway::Linear, stabilize: StabilizeFlags::NONE };
    let (_, v) = estimators::fit_and_evaluate(&pd, &cfg, None).unwrap();
    let beta = beta_mr(&v);
    let inf = estimators::influence_values(&v, beta);
    assert!((inf.iter().sum::<f64>() / inf.len() as f64).abs() < 1e-12);
}
