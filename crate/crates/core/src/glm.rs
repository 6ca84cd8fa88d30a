//! Gaussian, logistic and probit regression.
//!
//! Binomial fits use iteratively reweighted least squares from a zero start.
//! Each iteration solves the weighted least-squares problem by Householder QR
//! and halves the step while the log-likelihood decreases. Convergence is
//! declared when the sup norm of the weighted score drops below
//! `tol * max(1, Σw)`; one further Newton step is then taken, so the
//! returned coefficients are accurate to roughly the square of that.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::design::DesignSpec;
use crate::linalg::{self, dot, LinalgError, Matrix};
use crate::math::{abs, expit, ln, log1p, norm_cdf, norm_pdf, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Logit,
    Probit,
}

impl Family {
    pub fn is_binomial(self) -> bool {
        !matches!(self, Family::Gaussian)
    }

    /// Inverse link.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Logit => expit(eta),
            Family::Probit => norm_cdf(eta),
        }
    }

    /// `(μ, 1 − μ, dμ/dη)` with the complement computed without cancellation.
    fn mean_parts(self, eta: f64) -> (f64, f64, f64) {
        match self {
            Family::Gaussian => (eta, 1.0 - eta, 1.0),
            Family::Logit => {
                let p = expit(eta);
                let q = expit(-eta);
                (p, q, p * q)
            }
            Family::Probit => (norm_cdf(eta), norm_cdf(-eta), norm_pdf(eta)),
        }
    }

    /// `(dμ/dη) / (μ(1 − μ))`, the factor multiplying `y − μ` in the score.
    fn score_factor(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian | Family::Logit => 1.0,
            Family::Probit => {
                let (p, q, d) = self.mean_parts(eta);
                if p.min(q) > 1e-280 {
                    d / (p * q)
                } else {
                    // Inverse Mills ratio in the far tail.
                    let a = abs(eta);
                    let mills = a + 1.0 / a;
                    if eta < 0.0 {
                        mills
                    } else {
                        -mills
                    }
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Logit => "logit",
            Family::Probit => "probit",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GlmError {
    Linalg(LinalgError),
    InvalidResponse { row: usize, value: f64 },
    InvalidWeight { row: usize, value: f64 },
    NonConvergence { iterations: usize, score_norm: f64, coef_norm: f64 },
    NonFinite,
}

impl From<LinalgError> for GlmError {
    fn from(e: LinalgError) -> Self {
        GlmError::Linalg(e)
    }
}

impl core::error::Error for GlmError {}

impl fmt::Display for GlmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linalg(e) => write!(f, "{e}"),
            Self::InvalidResponse { row, value } => {
                write!(f, "row {row}: binomial response {value} outside [0, 1]")
            }
            Self::InvalidWeight { row, value } => write!(f, "row {row}: invalid weight {value}"),
            Self::NonConvergence { iterations, score_norm, coef_norm } => write!(
                f,
                "no convergence after {iterations} iterations (score norm {score_norm:.3e}, \
                 coefficient norm {coef_norm:.3e}; large coefficients suggest separation)"
            ),
            Self::NonFinite => f.write_str("non-finite value during fitting"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedGlm {
    pub family: Family,
    pub design: Option<DesignSpec>,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub weights_used: Option<Vec<f64>>,
    /// Residual variance for the gaussian family, 1 otherwise.
    pub dispersion: f64,
}

impl FittedGlm {
    /// A model with fixed coefficients, e.g. true data-generating values.
    pub fn from_coefficients(family: Family, design: Option<DesignSpec>, coefficients: Vec<f64>) -> Self {
        Self { family, design, coefficients, converged: true, iterations: 0, weights_used: None, dispersion: 1.0 }
    }

    pub fn with_design(mut self, design: DesignSpec) -> Self {
        self.design = Some(design);
        self
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        dot(&self.coefficients, row)
    }

    /// Fitted mean at a design row of the right length.
    pub fn mean_at(&self, row: &[f64]) -> f64 {
        self.family.mean(self.linear_predictor(row))
    }
}

/// `predict_mean` with a length check.
pub fn predict_mean(fit: &FittedGlm, row: &[f64]) -> Result<f64, GlmError> {
    if row.len() != fit.coefficients.len() {
        return Err(LinalgError::DimensionMismatch { expected: fit.coefficients.len(), found: row.len() }.into());
    }
    Ok(fit.mean_at(row))
}

fn check_inputs(x: &Matrix, y: &[f64], w: Option<&[f64]>, binomial: bool) -> Result<(), GlmError> {
    let n = x.rows();
    if y.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: y.len() }.into());
    }
    if let Some(w) = w {
        if w.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, found: w.len() }.into());
        }
        if let Some(row) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(GlmError::InvalidWeight { row, value: w[row] });
        }
    }
    if let Some(row) = y.iter().position(|v| !v.is_finite()) {
        return Err(GlmError::InvalidResponse { row, value: y[row] });
    }
    if binomial {
        if let Some(row) = y.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(GlmError::InvalidResponse { row, value: y[row] });
        }
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(GlmError::NonFinite);
    }
    Ok(())
}

/// (Weighted) ordinary least squares.
pub fn fit_ols(x: &Matrix, y: &[f64], w: Option<&[f64]>) -> Result<FittedGlm, GlmError> {
    check_inputs(x, y, w, false)?;
    let ones;
    let wv = match w {
        Some(w) => w,
        None => {
            ones = vec![1.0; y.len()];
            &ones
        }
    };
    let beta = linalg::least_squares(x, y, Some(wv))?;
    let fitted = x.mul_vec(&beta)?;
    let rss: f64 = y.iter().zip(&fitted).zip(wv).map(|((a, b), w)| w * (a - b) * (a - b)).sum();
    let wsum: f64 = wv.iter().sum();
    let df = wsum - x.cols() as f64;
    let dispersion = if df > 0.0 && rss > 0.0 { rss / df } else { 1.0 };
    Ok(FittedGlm {
        family: Family::Gaussian,
        design: None,
        coefficients: beta,
        converged: true,
        iterations: 1,
        weights_used: w.map(<[f64]>::to_vec),
        dispersion,
    })
}

/// Fits any family; gaussian goes straight to [`fit_ols`].
pub fn fit_glm(
    x: &Matrix,
    y: &[f64],
    family: Family,
    w: Option<&[f64]>,
    opts: IrlsOptions,
) -> Result<FittedGlm, GlmError> {
    match family {
        Family::Gaussian => fit_ols(x, y, w),
        _ => fit_glm_irls(x, y, family, w, opts),
    }
}

/// Logistic or probit regression by IRLS with step-halving.
pub fn fit_glm_irls(
    x: &Matrix,
    y: &[f64],
    family: Family,
    w: Option<&[f64]>,
    opts: IrlsOptions,
) -> Result<FittedGlm, GlmError> {
    assert!(family.is_binomial(), "IRLS is for the binomial families");
    check_inputs(x, y, w, true)?;
    let (n, p) = (x.rows(), x.cols());
    if n < p {
        return Err(LinalgError::Underdetermined { rows: n, cols: p }.into());
    }
    let ones;
    let wv = match w {
        Some(w) => w,
        None => {
            ones = vec![1.0; n];
            &ones
        }
    };
    let wsum: f64 = wv.iter().sum();
    let threshold = opts.tol * wsum.max(1.0);
    let mut beta = vec![0.0; p];
    let mut ll = log_lik(x, y, wv, family, &beta);
    let mut polished = false;
    let mut z = vec![0.0; n];
    let mut ww = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let score = score_vec(x, y, wv, family, &beta);
        let snorm = score.iter().fold(0.0f64, |m, v| m.max(abs(*v)));
        if !snorm.is_finite() {
            return Err(GlmError::NonFinite);
        }
        if snorm < threshold {
            if polished {
                break;
            }
            polished = true;
        } else {
            polished = false;
        }
        if iterations >= opts.max_iter {
            if polished {
                break;
            }
            return Err(GlmError::NonConvergence {
                iterations,
                score_norm: snorm,
                coef_norm: sqrt(dot(&beta, &beta)),
            });
        }
        iterations += 1;
        for i in 0..n {
            let eta = dot(x.row(i), &beta);
            let (mu, _, d) = family.mean_parts(eta);
            let h = family.score_factor(eta);
            // Working weight d²/(μ(1−μ)) = d·h; working response η + (y−μ)/d.
            let work = d * h;
            if work > 0.0 && work.is_finite() && d > 0.0 {
                ww[i] = wv[i] * work;
                z[i] = eta + (y[i] - mu) / d;
            } else {
                ww[i] = 0.0;
                z[i] = eta;
            }
        }
        let target = match linalg::least_squares(x, &z, Some(&ww)) {
            Ok(b) => b,
            Err(LinalgError::RankDeficient { .. }) if iterations > 1 => {
                // Fitted probabilities have saturated: separation.
                return Err(GlmError::NonConvergence {
                    iterations,
                    score_norm: snorm,
                    coef_norm: sqrt(dot(&beta, &beta)),
                });
            }
            Err(e) => return Err(e.into()),
        };
        let mut step: Vec<f64> = target.iter().zip(&beta).map(|(t, b)| t - b).collect();
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
            let cll = log_lik(x, y, wv, family, &cand);
            if cll.is_finite() && cll >= ll - 1e-12 * (1.0 + abs(ll)) {
                beta = cand;
                ll = cll;
                accepted = true;
                break;
            }
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
        if !accepted {
            if polished {
                break;
            }
            return Err(GlmError::NonConvergence {
                iterations,
                score_norm: snorm,
                coef_norm: sqrt(dot(&beta, &beta)),
            });
        }
    }
    if saturated(x, wv, family, &beta) {
        return Err(GlmError::NonConvergence {
            iterations,
            score_norm: score_vec(x, y, wv, family, &beta).iter().fold(0.0f64, |m, v| m.max(abs(*v))),
            coef_norm: sqrt(dot(&beta, &beta)),
        });
    }
    Ok(FittedGlm {
        family,
        design: None,
        coefficients: beta,
        converged: true,
        iterations,
        weights_used: w.map(<[f64]>::to_vec),
        dispersion: 1.0,
    })
}

/// Under separation the score vanishes only as the fitted probabilities
/// saturate, so a converged fit with a probability this close to 0 or 1 is
/// rejected.
const SATURATION: f64 = 1e-13;

fn saturated(x: &Matrix, w: &[f64], family: Family, beta: &[f64]) -> bool {
    (0..x.rows()).filter(|&i| w[i] > 0.0).map(|i| dot(x.row(i), beta)).any(|eta| {
        let (p, q, _) = family.mean_parts(eta);
        p.min(q) < SATURATION
    })
}

fn log_lik(x: &Matrix, y: &[f64], w: &[f64], family: Family, beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.rows() {
        if w[i] == 0.0 {
            continue;
        }
        let eta = dot(x.row(i), beta);
        ll += w[i] * obs_log_lik(family, eta, y[i]);
    }
    ll
}

fn obs_log_lik(family: Family, eta: f64, y: f64) -> f64 {
    match family {
        Family::Gaussian => -0.5 * (y - eta) * (y - eta),
        Family::Logit => {
            // log expit(η) = −log(1 + e^{−η}), written stably.
            let log_p = -softplus(-eta);
            let log_q = -softplus(eta);
            y * log_p + (1.0 - y) * log_q
        }
        Family::Probit => {
            let p = norm_cdf(eta);
            let q = norm_cdf(-eta);
            let lp = if p > 0.0 { ln(p) } else { f64::NEG_INFINITY };
            let lq = if q > 0.0 { ln(q) } else { f64::NEG_INFINITY };
            let a = if y > 0.0 { y * lp } else { 0.0 };
            let b = if y < 1.0 { (1.0 - y) * lq } else { 0.0 };
            a + b
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + log1p(crate::math::exp(-x))
    } else {
        log1p(crate::math::exp(x))
    }
}

fn score_vec(x: &Matrix, y: &[f64], w: &[f64], family: Family, beta: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        if w[i] == 0.0 {
            continue;
        }
        let eta = dot(x.row(i), beta);
        let r = w[i] * (y[i] - family.mean(eta)) * family.score_factor(eta);
        for (uj, xj) in u.iter_mut().zip(x.row(i)) {
            *uj += r * xj;
        }
    }
    u
}

fn unit_or(w: Option<&[f64]>, n: usize) -> Vec<f64> {
    w.map_or_else(|| vec![1.0; n], <[f64]>::to_vec)
}

/// Log-likelihood at the fitted coefficients (gaussian: up to a constant,
/// scaled by the dispersion).
pub fn log_likelihood(fit: &FittedGlm, x: &Matrix, y: &[f64], w: Option<&[f64]>) -> f64 {
    let w = unit_or(w, x.rows());
    log_lik(x, y, &w, fit.family, &fit.coefficients) / fit.dispersion
}

/// Per-record score contributions `Uᵢ`, one row per record.
pub fn score_contributions(fit: &FittedGlm, x: &Matrix, y: &[f64], w: Option<&[f64]>) -> Result<Matrix, GlmError> {
    check_inputs(x, y, w, fit.family.is_binomial())?;
    let (n, p) = (x.rows(), x.cols());
    if p != fit.coefficients.len() {
        return Err(LinalgError::DimensionMismatch { expected: fit.coefficients.len(), found: p }.into());
    }
    let mut out = Matrix::zeros(n, p);
    for i in 0..n {
        let eta = fit.linear_predictor(x.row(i));
        let wi = w.map_or(1.0, |w| w[i]);
        let r = wi * (y[i] - fit.family.mean(eta)) * fit.family.score_factor(eta) / fit.dispersion;
        for (o, xj) in out.row_mut(i).iter_mut().zip(x.row(i)) {
            *o = r * xj;
        }
    }
    Ok(out)
}

/// Total score `U` and expected information `𝓘` at the fitted coefficients.
pub fn score_and_information(
    fit: &FittedGlm,
    x: &Matrix,
    y: &[f64],
    w: Option<&[f64]>,
) -> Result<(Vec<f64>, Matrix), GlmError> {
    let contrib = score_contributions(fit, x, y, w)?;
    let p = x.cols();
    let mut u = vec![0.0; p];
    for i in 0..x.rows() {
        for (uj, c) in u.iter_mut().zip(contrib.row(i)) {
            *uj += c;
        }
    }
    let info_w: Vec<f64> = (0..x.rows())
        .map(|i| {
            let eta = fit.linear_predictor(x.row(i));
            let (_, _, d) = fit.family.mean_parts(eta);
            let wi = w.map_or(1.0, |w| w[i]);
            wi * d * fit.family.score_factor(eta) / fit.dispersion
        })
        .collect();
    Ok((u, x.gram(Some(&info_w))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logit;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_row_major(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn ols_examples() {
        let f = fit_ols(&col(&[1.0; 3]), &[2.0, 4.0, 6.0], None).unwrap();
        assert!(abs(f.coefficients[0] - 4.0) < 1e-14);
        let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]]).unwrap();
        let f = fit_ols(&x, &[1.0, 3.0, 5.0], None).unwrap();
        assert!(abs(f.coefficients[0] - 1.0) < 1e-14 && abs(f.coefficients[1] - 2.0) < 1e-14);
    }

    #[test]
    fn intercept_only_binomial() {
        let y = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let f = fit_glm_irls(&col(&[1.0; 10]), &y, Family::Logit, None, IrlsOptions::default()).unwrap();
        assert!(abs(f.coefficients[0] - logit(0.3)) < 1e-12);
        let y = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let f = fit_glm_irls(&col(&[1.0; 10]), &y, Family::Probit, None, IrlsOptions::default()).unwrap();
        assert!(abs(f.coefficients[0]) < 1e-14);
    }

    #[test]
    fn predictions() {
        let g = FittedGlm::from_coefficients(Family::Gaussian, None, vec![1.0, 2.0]);
        assert_eq!(predict_mean(&g, &[1.0, 3.0]).unwrap(), 7.0);
        let l = FittedGlm::from_coefficients(Family::Logit, None, vec![0.0]);
        assert_eq!(predict_mean(&l, &[1.0]).unwrap(), 0.5);
        let p = FittedGlm::from_coefficients(Family::Probit, None, vec![0.9, 0.3]);
        assert!(abs(predict_mean(&p, &[1.0, 0.0]).unwrap() - 0.815_939_874_653_240_5) < 1e-14);
        assert!(predict_mean(&p, &[1.0]).is_err());
    }

    #[test]
    fn separation_is_an_error() {
        let x = Matrix::from_rows(&[[1.0, -2.0], [1.0, -1.0], [1.0, 1.0], [1.0, 2.0]]).unwrap();
        let r = fit_glm_irls(&x, &[0.0, 0.0, 1.0, 1.0], Family::Logit, None, IrlsOptions::default());
        assert!(matches!(r, Err(GlmError::NonConvergence { .. })), "{r:?}");
    }

    #[test]
    fn binomial_response_range() {
        let r = fit_glm_irls(&col(&[1.0; 2]), &[0.0, 2.0], Family::Logit, None, IrlsOptions::default());
        assert_eq!(r, Err(GlmError::InvalidResponse { row: 1, value: 2.0 }));
    }
}
