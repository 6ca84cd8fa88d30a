//! Estimators of the nested mean `β0`, the baseline mean `δ0`, and their
//! contrast.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::data::{DataError, PairData, Record, TreatmentPair};
use crate::design::{DesignSpec, Overrides};
use crate::glm::FittedGlm;
use crate::linalg::{self, LinalgError, Matrix};
use crate::math::ln;
use crate::nuisance::{
    self, design_matrix, Diagnostics, NuisanceError, NuisanceFits, NuisanceValues, Pathway, Role, StabilizeFlags,
    WorkingModelSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BetaKind {
    Mle,
    A,
    B,
    Mr,
    MrSequential,
}

impl BetaKind {
    pub const STANDARD: [BetaKind; 4] = [BetaKind::Mle, BetaKind::A, BetaKind::B, BetaKind::Mr];

    pub fn default_delta(self) -> DeltaKind {
        match self {
            BetaKind::Mle => DeltaKind::GFormula,
            BetaKind::A => DeltaKind::Ipw,
            BetaKind::B | BetaKind::Mr | BetaKind::MrSequential => DeltaKind::Aipw,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BetaKind::Mle => "mle",
            BetaKind::A => "a",
            BetaKind::B => "b",
            BetaKind::Mr => "mr",
            BetaKind::MrSequential => "mr_seq",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "mle" => BetaKind::Mle,
            "a" => BetaKind::A,
            "b" => BetaKind::B,
            "mr" => BetaKind::Mr,
            "mr_seq" | "seq" => BetaKind::MrSequential,
            _ => return None,
        })
    }
}

impl fmt::Display for BetaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeltaKind {
    GFormula,
    Ipw,
    Aipw,
}

impl DeltaKind {
    pub fn name(self) -> &'static str {
        match self {
            DeltaKind::GFormula => "gformula",
            DeltaKind::Ipw => "ipw",
            DeltaKind::Aipw => "aipw",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "gformula" | "g" => DeltaKind::GFormula,
            "ipw" => DeltaKind::Ipw,
            "aipw" => DeltaKind::Aipw,
            _ => return None,
        })
    }
}

impl fmt::Display for DeltaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EstimatorKind {
    pub beta: BetaKind,
    pub delta: DeltaKind,
}

impl EstimatorKind {
    pub fn new(beta: BetaKind, delta: DeltaKind) -> Self {
        Self { beta, delta }
    }

    pub fn with_default_delta(beta: BetaKind) -> Self {
        Self { beta, delta: beta.default_delta() }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.beta, self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectScale {
    MeanDifference,
    LogRiskRatio,
}

impl EffectScale {
    pub fn name(self) -> &'static str {
        match self {
            EffectScale::MeanDifference => "diff",
            EffectScale::LogRiskRatio => "logrr",
        }
    }
}

impl fmt::Display for EffectScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimateError {
    Data(DataError),
    Nuisance(NuisanceError),
    Scale { beta: f64, delta: f64 },
    Sequential { role: Role, source: LinalgError },
    SequentialPathway,
    NonFinite { what: &'static str },
}

impl From<DataError> for EstimateError {
    fn from(e: DataError) -> Self {
        EstimateError::Data(e)
    }
}

impl From<NuisanceError> for EstimateError {
    fn from(e: NuisanceError) -> Self {
        EstimateError::Nuisance(e)
    }
}

impl core::error::Error for EstimateError {}

impl fmt::Display for EstimateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Data(e) => write!(f, "{e}"),
            Self::Nuisance(e) => write!(f, "{e}"),
            Self::Scale { beta, delta } => write!(
                f,
                "log risk ratio needs positive means, got beta = {beta}, delta = {delta}"
            ),
            Self::Sequential { role, source } => write!(f, "sequential refit of {role}: {source}"),
            Self::SequentialPathway => f.write_str("the sequential estimator needs the linear pathway"),
            Self::NonFinite { what } => write!(f, "{what} is not finite"),
        }
    }
}

/// `Pn B''`.
pub fn beta_mle(v: &NuisanceValues) -> f64 {
    v.mean(v.b_double_prime.iter().copied())
}

/// `Pn[w' M^ratio Y]`.
pub fn beta_a(v: &NuisanceValues) -> f64 {
    v.mean((0..v.len()).map(|i| v.w_baseline[i] * v.m_ratio[i] * v.y[i]))
}

/// `Pn[w (C1^ratio)^-1 B]`.
pub fn beta_b(v: &NuisanceValues) -> f64 {
    v.mean((0..v.len()).map(|i| v.w_comparison[i] / v.c1_ratio[i] * v.b[i]))
}

/// The three weighted residual terms of the multiply-robust estimator, per record.
pub fn mr_terms(v: &NuisanceValues, i: usize) -> [f64; 3] {
    [
        v.w_baseline[i] * v.m_ratio[i] * (v.y[i] - v.b[i]),
        v.w_comparison[i] / v.c1_ratio[i] * (v.b[i] - v.b_prime[i]),
        v.w_baseline[i] * (v.b_prime[i] - v.b_double_prime[i]),
    ]
}

fn mr_value(v: &NuisanceValues, i: usize) -> f64 {
    let [t1, t2, t3] = mr_terms(v, i);
    t1 + t2 + t3 + v.b_double_prime[i]
}

/// The multiply-robust estimator: the empirical mean of the efficient
/// influence function terms plus `B''`.
pub fn beta_mr(v: &NuisanceValues) -> f64 {
    v.mean((0..v.len()).map(|i| mr_value(v, i)))
}

/// `V^eff(β)` at every record.
pub fn influence_values(v: &NuisanceValues, beta: f64) -> Vec<f64> {
    (0..v.len()).map(|i| mr_value(v, i) - beta).collect()
}

/// `V^eff(β)` at a single record.
pub fn influence_function_value(v: &NuisanceValues, i: usize, beta: f64) -> f64 {
    mr_value(v, i) - beta
}

/// `Pn E(Y | e', C0)`.
pub fn delta_gformula(v: &NuisanceValues) -> f64 {
    v.mean(v.marginal.iter().copied())
}

/// `Pn[w' Y]`.
pub fn delta_ipw(v: &NuisanceValues) -> f64 {
    v.mean((0..v.len()).map(|i| v.w_baseline[i] * v.y[i]))
}

/// `Pn[w' (Y − μ) + μ]` for an outcome regression `μ` evaluated at `e'`.
pub fn delta_aipw_with(v: &NuisanceValues, mu: &[f64]) -> f64 {
    v.mean((0..v.len()).map(|i| v.w_baseline[i] * (v.y[i] - mu[i]) + mu[i]))
}

/// Augmented IPW with the marginal outcome model.
pub fn delta_aipw(v: &NuisanceValues) -> f64 {
    delta_aipw_with(v, &v.marginal)
}

pub fn delta(v: &NuisanceValues, kind: DeltaKind) -> f64 {
    match kind {
        DeltaKind::GFormula => delta_gformula(v),
        DeltaKind::Ipw => delta_ipw(v),
        DeltaKind::Aipw => delta_aipw(v),
    }
}

/// `β − δ` or `log(β / δ)`.
pub fn combine_effect(beta: f64, delta: f64, scale: EffectScale) -> Result<f64, EstimateError> {
    match scale {
        EffectScale::MeanDifference => Ok(beta - delta),
        EffectScale::LogRiskRatio => {
            if beta > 0.0 && delta > 0.0 {
                Ok(ln(beta) - ln(delta))
            } else {
                Err(EstimateError::Scale { beta, delta })
            }
        }
    }
}

/// Model choices shared by every estimator in a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimationConfig {
    pub models: WorkingModelSet,
    pub pathway: Pathway,
    pub stabilize: StabilizeFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub beta_hat: f64,
    pub delta_hat: f64,
    pub effect: f64,
    pub scale: EffectScale,
    /// Treatment pair in the caller's level coding.
    pub pair: TreatmentPair,
    pub kind: EstimatorKind,
    pub n_used: usize,
    pub stabilize: StabilizeFlags,
    pub diagnostics: Diagnostics,
}

/// Every `β` and `δ` estimate from one set of nuisance fits.
#[derive(Debug, Clone, PartialEq)]
pub struct AllEstimates {
    pub mle: f64,
    pub a: f64,
    pub b: f64,
    pub mr: f64,
    pub mr_sequential: Option<f64>,
    pub gformula: f64,
    pub ipw: f64,
    pub aipw: f64,
    pub diagnostics: Diagnostics,
}

impl AllEstimates {
    pub fn beta(&self, kind: BetaKind) -> Option<f64> {
        match kind {
            BetaKind::Mle => Some(self.mle),
            BetaKind::A => Some(self.a),
            BetaKind::B => Some(self.b),
            BetaKind::Mr => Some(self.mr),
            BetaKind::MrSequential => self.mr_sequential,
        }
    }

    pub fn delta(&self, kind: DeltaKind) -> f64 {
        match kind {
            DeltaKind::GFormula => self.gformula,
            DeltaKind::Ipw => self.ipw,
            DeltaKind::Aipw => self.aipw,
        }
    }
}

/// Fits the working models and evaluates the per-record quantities.
pub fn fit_and_evaluate(
    data: &PairData,
    cfg: &EstimationConfig,
    row_weights: Option<&[f64]>,
) -> Result<(NuisanceFits, NuisanceValues), EstimateError> {
    let fits = nuisance::fit_nuisances(data, &cfg.models, cfg.pathway, row_weights)?;
    let vals = nuisance::evaluate(data, &fits, cfg.stabilize, row_weights)?;
    Ok((fits, vals))
}

/// All estimators on one dataset. The sequential estimator is included when
/// `sequential` is set (it needs the linear pathway).
pub fn estimate_all(
    data: &PairData,
    cfg: &EstimationConfig,
    row_weights: Option<&[f64]>,
    sequential: bool,
) -> Result<AllEstimates, EstimateError> {
    let (fits, v) = fit_and_evaluate(data, cfg, row_weights)?;
    let mr_sequential = if sequential {
        Some(sequential_from(data, &fits, &v)?.beta)
    } else {
        None
    };
    let out = AllEstimates {
        mle: beta_mle(&v),
        a: beta_a(&v),
        b: beta_b(&v),
        mr: beta_mr(&v),
        mr_sequential,
        gformula: delta_gformula(&v),
        ipw: delta_ipw(&v),
        aipw: delta_aipw(&v),
        diagnostics: v.diagnostics,
    };
    let finite = [out.mle, out.a, out.b, out.mr, out.gformula, out.ipw, out.aipw]
        .iter()
        .chain(out.mr_sequential.iter())
        .all(|x| x.is_finite());
    if !finite {
        return Err(EstimateError::NonFinite { what: "an estimate" });
    }
    Ok(out)
}

/// One estimator with its `δ` pairing, combined on `scale`.
pub fn estimate(
    data: &PairData,
    cfg: &EstimationConfig,
    kind: EstimatorKind,
    scale: EffectScale,
    row_weights: Option<&[f64]>,
) -> Result<EstimateResult, EstimateError> {
    let (fits, v) = fit_and_evaluate(data, cfg, row_weights)?;
    let beta_hat = match kind.beta {
        BetaKind::Mle => beta_mle(&v),
        BetaKind::A => beta_a(&v),
        BetaKind::B => beta_b(&v),
        BetaKind::Mr => beta_mr(&v),
        BetaKind::MrSequential => sequential_from(data, &fits, &v)?.beta,
    };
    let delta_hat = delta(&v, kind.delta);
    if !(beta_hat.is_finite() && delta_hat.is_finite()) {
        return Err(EstimateError::NonFinite { what: "an estimate" });
    }
    Ok(EstimateResult {
        beta_hat,
        delta_hat,
        effect: combine_effect(beta_hat, delta_hat, scale)?,
        scale,
        pair: data.original_pair(),
        kind,
        n_used: data.data().len(),
        stabilize: cfg.stabilize,
        diagnostics: v.diagnostics,
    })
}

/// Output of the sequential multiply-robust estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialEstimate {
    pub beta: f64,
    /// `Pn` of the three weighted residual terms after the refits.
    pub terms: [f64; 3],
    pub fits: NuisanceFits,
    pub values: NuisanceValues,
}

/// Refits the outcome, mediator and C1 models by weighted least squares so
/// that the three weighted terms of the multiply-robust estimator vanish,
/// then returns `Pn B''` under the refitted models.
pub fn beta_mr_sequential(
    data: &PairData,
    cfg: &EstimationConfig,
    row_weights: Option<&[f64]>,
) -> Result<SequentialEstimate, EstimateError> {
    let (fits, v) = fit_and_evaluate(data, cfg, row_weights)?;
    sequential_from(data, &fits, &v)
}

/// Weighted refit of `fit` on the records where `w` is nonzero, with the
/// design evaluated under `ov`. Columns that are constant multiples of
/// earlier ones on that subset get coefficient zero.
fn refit(
    records: &[Record],
    fit: &FittedGlm,
    ov: &Overrides<'_>,
    y: impl Fn(&Record) -> f64,
    w: &[f64],
    role: Role,
) -> Result<FittedGlm, EstimateError> {
    let design: &DesignSpec = fit.design.as_ref().expect("fits carry their design");
    let idx: Vec<usize> = (0..records.len()).filter(|&i| w[i] != 0.0).collect();
    if idx.is_empty() {
        return Ok(fit.clone());
    }
    let sub: Vec<Record> = idx.iter().map(|&i| records[i].clone()).collect();
    let x = design_matrix(&sub, design, ov);
    let keep = linalg::independent_columns(&x, 1e-9);
    let p = design.len();
    let xr = Matrix::from_rows(
        &(0..x.rows()).map(|i| keep.iter().map(|&j| x[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
    )
    .map_err(|source| EstimateError::Sequential { role, source })?;
    let yv: Vec<f64> = sub.iter().map(&y).collect();
    let wv: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
    let coef = linalg::weighted_normal_solve(&xr, &yv, &wv).map_err(|source| EstimateError::Sequential { role, source })?;
    let mut full = vec![0.0; p];
    for (k, &j) in keep.iter().enumerate() {
        full[j] = coef[k];
    }
    let mut out = fit.clone();
    out.coefficients = full;
    out.weights_used = Some(w.to_vec());
    out.iterations = 1;
    Ok(out)
}

fn sequential_from(data: &PairData, fits: &NuisanceFits, v: &NuisanceValues) -> Result<SequentialEstimate, EstimateError> {
    if fits.pathway != Pathway::Linear {
        return Err(EstimateError::SequentialPathway);
    }
    let recs = data.data().records();
    let n = recs.len();
    let rw = |i: usize| v.row_weights.as_ref().map_or(1.0, |w| w[i]);
    let TreatmentPair { comparison, baseline } = fits.pair;
    let mut fits = fits.clone();

    // Outcome: weights w' M^ratio on the baseline arm, E fixed at e'.
    let w1: Vec<f64> = (0..n).map(|i| rw(i) * v.w_baseline[i] * v.m_ratio[i]).collect();
    fits.outcome = refit(recs, &fits.outcome, &Overrides::e(f64::from(baseline)), |r| r.y, &w1, Role::Outcome)?;

    // Mediator: B − B' = κ (M − m̂) with κ = B(m = 1) − B(m = 0).
    let e_prime = Overrides::e(f64::from(baseline));
    let w2: Vec<f64> = (0..n)
        .map(|i| {
            let r = &recs[i];
            if v.w_comparison[i] == 0.0 {
                return 0.0;
            }
            let kappa = mean_at(&fits.outcome, r, &e_prime.with_m(1.0)) - mean_at(&fits.outcome, r, &e_prime.with_m(0.0));
            rw(i) * v.w_comparison[i] / v.c1_ratio[i] * kappa
        })
        .collect();
    fits.mediator = refit(recs, &fits.mediator, &Overrides::e(f64::from(comparison)), |r| r.m, &w2, Role::Mediator)?;

    // C1 components: B' − B'' = Σ_j κ_j (C1_j − ĉ1_j) on the baseline arm.
    let d1 = data.data().d1();
    for j in 0..d1 {
        let wj: Vec<f64> = (0..n)
            .map(|i| {
                let r = &recs[i];
                if v.w_baseline[i] == 0.0 {
                    return 0.0;
                }
                let mut c1 = r.c1.clone();
                let base = fits.b_prime_at(r, &c1);
                c1[j] += 1.0;
                rw(i) * v.w_baseline[i] * (fits.b_prime_at(r, &c1) - base)
            })
            .collect();
        fits.c1_means[j] = refit(recs, &fits.c1_means[j], &e_prime, |r| r.c1[j], &wj, Role::C1Mean(j))?;
    }

    let mut values = v.clone();
    for (i, r) in recs.iter().enumerate() {
        values.b[i] = fits.b(r);
        values.b_prime[i] = fits.b_prime(r);
        values.b_double_prime[i] = fits.b_double_prime(r);
    }
    let mut terms = [0.0; 3];
    for (k, t) in terms.iter_mut().enumerate() {
        *t = values.mean((0..n).map(|i| mr_terms(&values, i)[k]));
    }
    let beta = beta_mle(&values);
    if !beta.is_finite() {
        return Err(EstimateError::NonFinite { what: "the sequential estimate" });
    }
    Ok(SequentialEstimate { beta, terms, fits, values })
}

fn mean_at(fit: &FittedGlm, r: &Record, ov: &Overrides<'_>) -> f64 {
    fit.mean_at(&fit.design.as_ref().expect("fits carry their design").row(r, ov))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_examples() {
        let d = combine_effect(2.678, 3.596, EffectScale::MeanDifference).unwrap();
        assert!((d + 0.918).abs() < 1e-12);
        assert_eq!(combine_effect(1.7, 1.7, EffectScale::LogRiskRatio).unwrap(), 0.0);
        assert!(matches!(
            combine_effect(-0.1, 1.0, EffectScale::LogRiskRatio),
            Err(EstimateError::Scale { .. })
        ));
    }

    #[test]
    fn default_pairings() {
        assert_eq!(BetaKind::Mr.default_delta(), DeltaKind::Aipw);
        assert_eq!(BetaKind::B.default_delta(), DeltaKind::Aipw);
        assert_eq!(BetaKind::A.default_delta(), DeltaKind::Ipw);
        assert_eq!(BetaKind::Mle.default_delta(), DeltaKind::GFormula);
    }
}
