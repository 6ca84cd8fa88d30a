//! Bootstrap intervals, the analytic variance of `β̂_mle` and the Monte Carlo
//! t test.
//!
//! Replicate `r` draws its randomness from `derive_seed(seed, r)` only, so
//! replicates can run in any order or in parallel: compute each with
//! [`bootstrap_replicate`] and collect them with [`interval_from_replicates`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::data::PairData;
use crate::design::Overrides;
use crate::glm::{self, GlmError};
use crate::linalg::{self, LinalgError};
use crate::math::{abs, sqrt, t_quantile};
use crate::nuisance::{self, NuisanceFits, Pathway, Role};
use crate::rng::{derive_seed, streams, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub enum InferenceError {
    TooFewReplicates { found: usize },
    InvalidLevel(f64),
    TooManyFailures { failed: usize, total: usize, first: String },
    NonFinite,
    Pathway,
    Fit { role: Role, source: GlmError },
    Singular { role: Role, source: LinalgError },
}

impl core::error::Error for InferenceError {}

impl fmt::Display for InferenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewReplicates { found } => write!(f, "need at least 2 replicates, found {found}"),
            Self::InvalidLevel(l) => write!(f, "level must lie in (0, 1), got {l}"),
            Self::TooManyFailures { failed, total, first } => {
                write!(f, "{failed} of {total} bootstrap replicates failed (more than 10%); first error: {first}")
            }
            Self::NonFinite => f.write_str("non-finite replicate value"),
            Self::Pathway => f.write_str("the analytic variance needs the linear pathway"),
            Self::Fit { role, source } => write!(f, "score of the {role} model: {source}"),
            Self::Singular { role, source } => write!(f, "information of the {role} model is singular: {source}"),
        }
    }
}

/// Per-row multipliers of the wild bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WildWeights {
    Exp1,
    /// All ones; every replicate reproduces the point estimate.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BootstrapKind {
    Nonparametric,
    Wild(WildWeights),
}

impl BootstrapKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Nonparametric => "nonparametric",
            Self::Wild(WildWeights::Exp1) => "wild_exp1",
            Self::Wild(WildWeights::Unit) => "wild_unit",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "nonparametric" => Self::Nonparametric,
            "wild_exp1" | "wild" => Self::Wild(WildWeights::Exp1),
            "wild_unit" => Self::Wild(WildWeights::Unit),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSpec {
    pub kind: BootstrapKind,
    pub replicates: usize,
    pub seed: u64,
    pub ci_level: f64,
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.replicates < 2 {
            return Err(InferenceError::TooFewReplicates { found: self.replicates });
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(InferenceError::InvalidLevel(self.ci_level));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub se: f64,
    /// Successful replicate values in replicate order.
    pub replicate_values: Vec<f64>,
    pub failures: usize,
    pub level: f64,
}

/// What a replicate perturbs: resampled row indices or per-row weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Resample {
    Rows(Vec<usize>),
    Weights(Vec<f64>),
}

/// The resample of replicate `r`, a pure function of `(seed, r)`.
pub fn draw_resample(kind: BootstrapKind, n: usize, seed: u64, r: usize) -> Resample {
    let mut rng = StreamRng::new(derive_seed(seed, r as u64), streams::RESAMPLE);
    match kind {
        BootstrapKind::Nonparametric => Resample::Rows((0..n).map(|_| rng.index(n)).collect()),
        BootstrapKind::Wild(WildWeights::Exp1) => Resample::Weights((0..n).map(|_| rng.exp1()).collect()),
        BootstrapKind::Wild(WildWeights::Unit) => Resample::Weights(vec![1.0; n]),
    }
}

/// Runs `pipeline` on replicate `r`. The pipeline receives the pair data and
/// optional row weights, and must refit everything it uses.
pub fn bootstrap_replicate<F, E>(data: &PairData, spec: &BootstrapSpec, r: usize, pipeline: &F) -> Result<f64, String>
where
    F: Fn(&PairData, Option<&[f64]>) -> Result<f64, E>,
    E: fmt::Display,
{
    let out = match draw_resample(spec.kind, data.data().len(), spec.seed, r) {
        Resample::Rows(idx) => pipeline(&data.with_data(data.data().select(&idx)), None),
        Resample::Weights(w) => pipeline(data, Some(&w)),
    };
    match out {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(format!("non-finite value {v}")),
        Err(e) => Err(format!("{e}")),
    }
}

/// Collects replicate outcomes (indexed by replicate number) into a
/// percentile interval. More than 10% failures is an error.
pub fn interval_from_replicates(
    point: f64,
    spec: &BootstrapSpec,
    mut results: Vec<(usize, Result<f64, String>)>,
) -> Result<IntervalEstimate, InferenceError> {
    spec.validate()?;
    results.sort_by_key(|(r, _)| *r);
    let total = results.len();
    let failed: Vec<_> = results.iter().filter(|(_, v)| v.is_err()).collect();
    if failed.len() * 10 > total {
        let (r, e) = failed[0];
        let first = format!("replicate {r}: {}", e.as_ref().err().map_or("", String::as_str));
        return Err(InferenceError::TooManyFailures { failed: failed.len(), total, first });
    }
    let failures = failed.len();
    let values: Vec<f64> = results.into_iter().filter_map(|(_, v)| v.ok()).collect();
    if values.len() < 2 {
        return Err(InferenceError::TooFewReplicates { found: values.len() });
    }
    let (lower, upper) = percentile_interval(&values, spec.ci_level)?;
    Ok(IntervalEstimate { point, lower, upper, se: sample_sd(&values), replicate_values: values, failures, level: spec.ci_level })
}

/// Sequential bootstrap of `pipeline` around the estimate `point`.
pub fn bootstrap<F, E>(data: &PairData, point: f64, spec: &BootstrapSpec, pipeline: F) -> Result<IntervalEstimate, InferenceError>
where
    F: Fn(&PairData, Option<&[f64]>) -> Result<f64, E>,
    E: fmt::Display,
{
    spec.validate()?;
    let results = (0..spec.replicates).map(|r| (r, bootstrap_replicate(data, spec, r, &pipeline))).collect();
    interval_from_replicates(point, spec, results)
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman and Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = libm::ceil(h) as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed percentile interval at `level`.
pub fn percentile_interval(values: &[f64], level: f64) -> Result<(f64, f64), InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::InvalidLevel(level));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(InferenceError::NonFinite);
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&s, a), quantile_sorted(&s, 1.0 - a)))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard deviation with the `n − 1` divisor.
pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    sqrt(ss / (v.len() as f64 - 1.0))
}

/// One-sample t test of the replicate mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub replicates: usize,
    pub mean: f64,
    pub sd: f64,
    /// Monte Carlo standard error `sd / √R`.
    pub se: f64,
    pub t: f64,
    pub critical: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub reject: bool,
    /// Zero spread with the mean off the hypothesis: `t` is infinite.
    pub degenerate: bool,
}

impl TTest {
    pub fn bias(&self, truth: f64) -> f64 {
        self.mean - truth
    }
}

pub fn mc_t_test(values: &[f64], hypothesized: f64, alpha: f64) -> Result<TTest, InferenceError> {
    let r = values.len();
    if r < 2 {
        return Err(InferenceError::TooFewReplicates { found: r });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidLevel(alpha));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(InferenceError::NonFinite);
    }
    let m = mean(values);
    let sd = sample_sd(values);
    let se = sd / sqrt(r as f64);
    let critical = t_quantile(1.0 - alpha / 2.0, (r - 1) as f64);
    let diff = m - hypothesized;
    let (t, degenerate) = if se > 0.0 {
        (diff / se, false)
    } else if diff == 0.0 {
        (0.0, false)
    } else {
        (diff.signum() * f64::INFINITY, true)
    };
    Ok(TTest {
        replicates: r,
        mean: m,
        sd,
        se,
        t,
        critical,
        ci_lower: m - critical * se,
        ci_upper: m + critical * se,
        reject: abs(t) > critical,
        degenerate,
    })
}

/// `Pn B''` at the given fits and per-record `B''`.
fn g_values(data: &PairData, fits: &NuisanceFits) -> Vec<f64> {
    data.data().records().iter().map(|r| fits.b_double_prime(r)).collect()
}

fn blocks(fits: &NuisanceFits) -> Vec<Role> {
    let mut roles = vec![Role::Outcome, Role::Mediator];
    roles.extend((0..fits.c1_means.len()).map(Role::C1Mean));
    roles
}

fn block_mut(fits: &mut NuisanceFits, role: Role) -> &mut glm::FittedGlm {
    match role {
        Role::Outcome => &mut fits.outcome,
        Role::Mediator => &mut fits.mediator,
        Role::C1Mean(j) => &mut fits.c1_means[j],
        _ => unreachable!("only the nested regressions enter the variance"),
    }
}

/// Gradient of `Pn B''` in the coefficients of one regression, by central
/// differences. `B''` is linear in each block, so the step size is not
/// critical.
pub fn g_gradient(data: &PairData, fits: &NuisanceFits, role: Role) -> Vec<f64> {
    let p = fits.get(role).expect("role is fitted").coefficients.len();
    let mut out = vec![0.0; p];
    let mut work = fits.clone();
    for (k, o) in out.iter_mut().enumerate() {
        let c = block_mut(&mut work, role).coefficients[k];
        let h = 1e-5 * c.abs().max(1.0);
        block_mut(&mut work, role).coefficients[k] = c + h;
        let up = mean(&g_values(data, &work));
        block_mut(&mut work, role).coefficients[k] = c - h;
        let down = mean(&g_values(data, &work));
        block_mut(&mut work, role).coefficients[k] = c;
        *o = (up - down) / (2.0 * h);
    }
    out
}

/// Estimated variance of `β̂_mle = Pn B''`: the empirical second moment of
/// `g(γ̂) − β̂ + D_γᵀ 𝓘⁻¹ U(γ̂)` over records, divided by `n`. The outcome,
/// mediator and C1 regressions form the blocks of `γ`; `𝓘` is the
/// per-record average information of each block.
pub fn mle_sandwich_variance(data: &PairData, fits: &NuisanceFits) -> Result<f64, InferenceError> {
    if fits.pathway != Pathway::Linear {
        return Err(InferenceError::Pathway);
    }
    let recs = data.data().records();
    let n = recs.len();
    let g = g_values(data, fits);
    let beta = mean(&g);
    let mut psi: Vec<f64> = g.iter().map(|gi| gi - beta).collect();
    for role in blocks(fits) {
        let fit = fits.get(role).expect("role is fitted");
        let design = fit.design.as_ref().expect("fits carry their design");
        let x = nuisance::design_matrix(recs, design, &Overrides::NONE);
        let y = nuisance::response(recs, role);
        let scores = glm::score_contributions(fit, &x, &y, None).map_err(|source| InferenceError::Fit { role, source })?;
        let (_, mut info) =
            glm::score_and_information(fit, &x, &y, None).map_err(|source| InferenceError::Fit { role, source })?;
        let p = info.cols();
        for i in 0..p {
            for j in 0..p {
                info[(i, j)] /= n as f64;
            }
        }
        let d = g_gradient(data, fits, role);
        // a = 𝓘⁻¹ D, so that Dᵀ 𝓘⁻¹ U_i = aᵀ U_i.
        let a = linalg::solve(&info, &d).map_err(|source| InferenceError::Singular { role, source })?;
        for (i, p) in psi.iter_mut().enumerate() {
            *p += linalg::dot(&a, scores.row(i));
        }
    }
    let v = psi.iter().map(|p| p * p).sum::<f64>() / (n as f64 * n as f64);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(InferenceError::NonFinite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_test_examples() {
        let t = mc_t_test(&[2.678; 5], 2.678, 0.05).unwrap();
        assert_eq!(t.t, 0.0);
        assert!(!t.reject);
        let t = mc_t_test(&[3.0; 5], 2.678, 0.05).unwrap();
        assert!(t.reject && t.degenerate && t.t.is_infinite());
        let v = [1.0, 2.0, 3.0, 4.0];
        let sd = sample_sd(&v);
        let h = mean(&v) - 10.0 * sd / 2.0;
        let t = mc_t_test(&v, h, 0.05).unwrap();
        assert!((t.t - 10.0).abs() < 1e-12 && t.reject);
        assert!(mc_t_test(&[1.0], 0.0, 0.05).is_err());
    }

    #[test]
    fn type7_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert!((quantile_sorted(&s, 0.1) - 1.4).abs() < 1e-15);
        let (lo, hi) = percentile_interval(&[7.0; 10], 0.95).unwrap();
        assert_eq!((lo, hi), (7.0, 7.0));
    }

    #[test]
    fn resamples_are_pure() {
        for kind in [BootstrapKind::Nonparametric, BootstrapKind::Wild(WildWeights::Exp1)] {
            assert_eq!(draw_resample(kind, 30, 4, 7), draw_resample(kind, 30, 4, 7));
            assert_ne!(draw_resample(kind, 30, 4, 7), draw_resample(kind, 30, 4, 8));
        }
        assert_eq!(draw_resample(BootstrapKind::Wild(WildWeights::Unit), 3, 1, 0), Resample::Weights(vec![1.0; 3]));
    }
}
