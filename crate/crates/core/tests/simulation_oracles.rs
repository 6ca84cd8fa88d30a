use pathfx_core::simulation::*;

#[test]
fn monte_carlo_oracles_agree_with_closed_forms() {
    let (beta, delta, _) = closed_form_truth();
    let b = oracle_beta0_mc(1_000_000, 1);
    let d = oracle_delta0_mc(1_000_000, 2);
    assert!((b.value - beta).abs() < 4.0 * b.se, "{b:?}");
    assert!((d.value - delta).abs() < 4.0 * d.se, "{d:?}");
}

#[test]
fn marginal_truth_at_baseline() {
    let m = true_marginal();
    assert!((m[0] - 2.005).abs() < 1e-12 && (m[1] - 1.591).abs() < 1e-12);
}

#[test]
fn replicate_order_does_not_matter() {
    let spec = SimulationSpec { n: 300, replications: 12, ..SimulationSpec::desk(Regime::B, 5) };
    let forward: Vec<_> = (0..12).map(|r| run_replicate(&spec, r)).collect();
    let backward: Vec<_> = (0..12).rev().map(|r| run_replicate(&spec, r)).collect();
    assert_eq!(summarize(&spec, forward).unwrap(), summarize(&spec, backward).unwrap());
    let sequential = run_monte_carlo(&spec).unwrap();
    assert_eq!(sequential.summaries.len(), 4);
    assert_eq!(sequential.failures, 0);
    assert!(format!("{sequential}").contains("mr"));
}

#[test]
fn large_draw_moments() {
    let d = draw_dataset(200_000, 9);
    let n = d.len() as f64;
    let share = d.records().iter().filter(|r| r.e == 1).count() as f64 / n;
    // P(E = 1) = E expit(0.9 + 0.3 C0) over C0 ~ U(0, 2).
    let exact = (0..20_000).map(|k| pathfx_core::math::expit(0.9 + 0.3 * 2.0 * (k as f64 + 0.5) / 20_000.0)).sum::<f64>() / 20_000.0;
    assert!((share - exact).abs() < 4.0 * (exact * (1.0 - exact) / n).sqrt());
    let c0 = d.records().iter().map(|r| r.c0[0]).sum::<f64>() / n;
    assert!((c0 - 1.0).abs() < 4.0 * (1.0f64 / 3.0 / n).sqrt());
}
