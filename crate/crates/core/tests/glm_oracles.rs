use nalgebra::{DMatrix, DVector};
use pathfx_core::glm::{fit_glm_irls, fit_ols, Family, IrlsOptions};
use pathfx_core::linalg::Matrix;
use pathfx_core::math::{expit, logit};
use pathfx_core::rng::StreamRng;
use proptest::prelude::*;

fn design(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = StreamRng::new(seed, 0);
    (0..n)
        .map(|_| {
            let mut row = vec![1.0];
            row.extend((1..p).map(|_| 2.0 * rng.normal()));
            row
        })
        .collect()
}

fn to_nalgebra(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

/// Weighted normal equations solved by Cholesky.
fn normal_equations(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> DVector<f64> {
    let x = to_nalgebra(rows);
    let wd = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let xtw = x.transpose() * wd;
    let a = &xtw * &x;
    let b = xtw * DVector::from_column_slice(y);
    a.cholesky().expect("positive definite").solve(&b)
}

/// Plain Newton-Raphson for the logistic likelihood, no step control.
fn newton_logit(rows: &[Vec<f64>], y: &[f64]) -> Option<DVector<f64>> {
    let x = to_nalgebra(rows);
    let mut beta = DVector::zeros(x.ncols());
    for _ in 0..100 {
        let eta = &x * &beta;
        let p = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let grad = x.transpose() * (DVector::from_column_slice(y) - &p);
        let wv = p.map(|q| q * (1.0 - q));
        let h = x.transpose() * DMatrix::from_diagonal(&wv) * &x;
        let step = h.cholesky()?.solve(&grad);
        beta += &step;
        if step.amax() < 1e-14 {
            return Some(beta);
        }
    }
    Some(beta)
}

proptest! {
    #[test]
    fn ols_matches_normal_equations(n in 8usize..80, p in 1usize..6, seed in any::<u64>(), weighted in any::<bool>()) {
        prop_assume!(n >= 2 * p);
        let rows = design(n, p, seed);
        let mut rng = StreamRng::new(seed, 1);
        let y: Vec<f64> = (0..n).map(|_| 3.0 * rng.normal()).collect();
        let w: Vec<f64> = if weighted { (0..n).map(|_| 0.1 + rng.exp1()).collect() } else { vec![1.0; n] };
        let fit = fit_ols(&Matrix::from_rows(&rows).unwrap(), &y, weighted.then_some(&w[..])).unwrap();
        let oracle = normal_equations(&rows, &y, &w);
        for (a, b) in fit.coefficients.iter().zip(oracle.iter()) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn logistic_irls_matches_newton(n in 60usize..300, p in 1usize..5, seed in any::<u64>()) {
        let rows = design(n, p, seed);
        let mut rng = StreamRng::new(seed, 2);
        let truth: Vec<f64> = (0..p).map(|_| 0.5 * rng.normal()).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| {
                let eta: f64 = r.iter().zip(&truth).map(|(a, b)| a * b).sum();
                f64::from(u8::from(rng.bernoulli(expit(eta))))
            })
            .collect();
        let fit = fit_glm_irls(&Matrix::from_rows(&rows).unwrap(), &y, Family::Logit, None, IrlsOptions::default());
        let oracle = newton_logit(&rows, &y);
        // Separated samples have no finite maximizer; both sides must agree on that.
        let finite = oracle.as_ref().is_some_and(|b| b.amax() < 15.0);
        prop_assume!(finite);
        let fit = fit.unwrap();
        for (a, b) in fit.coefficients.iter().zip(oracle.unwrap().iter()) {
            prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn intercept_only_logit_is_logit_mean(ones in 1usize..200, zeros in 1usize..200) {
        let n = ones + zeros;
        let y: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i < ones))).collect();
        let x = Matrix::from_row_major(n, 1, vec![1.0; n]).unwrap();
        let fit = fit_glm_irls(&x, &y, Family::Logit, None, IrlsOptions::default()).unwrap();
        let target = logit(ones as f64 / n as f64);
        prop_assert!((fit.coefficients[0] - target).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_probit_at_half(k in 1usize..200) {
        let y: Vec<f64> = (0..2 * k).map(|i| f64::from(u8::from(i % 2 == 0))).collect();
        let x = Matrix::from_row_major(2 * k, 1, vec![1.0; 2 * k]).unwrap();
        let fit = fit_glm_irls(&x, &y, Family::Probit, None, IrlsOptions::default()).unwrap();
        prop_assert!(fit.coefficients[0].abs() < 1e-14);
    }
}
