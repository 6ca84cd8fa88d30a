use pathfx_core::math::{expit, logit};
use pathfx_core::nuisance::{stabilize_log_odds, stabilize_propensity};
use proptest::prelude::*;

fn fixture() -> impl Strategy<Value = (Vec<f64>, Vec<u32>, u32, Option<Vec<f64>>)> {
    (3usize..300).prop_flat_map(|n| {
        (
            prop::collection::vec(0.001f64..0.999, n),
            prop::collection::vec(0u32..2, n),
            0u32..2,
            prop::option::of(prop::collection::vec(0.05f64..5.0, n)),
        )
            .prop_filter("both levels present", |(_, e, _, _)| e.contains(&0) && e.contains(&1))
    })
}

fn pn(v: impl Iterator<Item = f64>, w: Option<&[f64]>, n: usize) -> f64 {
    match w {
        None => v.sum::<f64>() / n as f64,
        Some(w) => v.zip(w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stabilized_odds_sum_to_other_share((p, e, level, w) in fixture()) {
        let w = w.as_deref();
        let n = p.len();
        let out = stabilize_propensity(&p, &e, level, w).unwrap();
        let f = |q: f64| if level == 1 { q } else { 1.0 - q };
        let lhs = pn((0..n).map(|i| if e[i] == level { (1.0 - f(out[i])) / f(out[i]) } else { 0.0 }), w, n);
        let share = pn((0..n).map(|i| f64::from(u8::from(e[i] == level))), w, n);
        prop_assert!((lhs - (1.0 - share)).abs() < 1e-10, "{lhs} vs {}", 1.0 - share);
    }

    #[test]
    fn shift_is_a_constant_on_the_logit_scale((p, e, level, w) in fixture()) {
        let lo: Vec<f64> = p.iter().map(|&q| logit(q)).collect();
        let out = stabilize_log_odds(&lo, &e, level, w.as_deref()).unwrap();
        let d0 = out[0] - lo[0];
        for (a, b) in out.iter().zip(&lo) {
            prop_assert!((a - b - d0).abs() < 1e-9);
        }
        let via_p = stabilize_propensity(&p, &e, level, w.as_deref()).unwrap();
        for (a, b) in via_p.iter().zip(&out) {
            prop_assert!((a - expit(*b)).abs() < 1e-12);
        }
    }
}

#[test]
fn degenerate_share_is_an_error() {
    assert!(stabilize_propensity(&[0.3, 0.4], &[1, 1], 1, None).is_err());
}
