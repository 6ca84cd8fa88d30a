//! Working models, density ratios, stabilization and nested means.
//!
//! Every fit runs on pair-prepared data, where the comparison arm is coded
//! `E = 1` and the baseline arm `E = 0` (see [`crate::data::PairData`]).
//! Propensities are carried as log-odds of `E = 1`, clipped to
//! `[logit(1e-6), logit(1 - 1e-6)]`, so that density ratios are exponentials
//! of differences and cancel exactly when both levels coincide.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::data::{PairData, Record, TreatmentPair};
use crate::design::{Col, DesignError, DesignSpec, Overrides};
use crate::glm::{self, Family, FittedGlm, GlmError, IrlsOptions};
use crate::linalg::Matrix;
use crate::math::{exp, ln, logit, norm_cdf};

/// Fitted propensities are kept inside `[CLIP, 1 - CLIP]`.
pub const CLIP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pathway {
    /// Gaussian means linear in `M` and `C1`; nested means by plug-in.
    Linear,
    /// Binary `M` and `C1`; nested means by summing over the support.
    Discrete,
}

impl fmt::Display for Pathway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pathway::Linear => "linear",
            Pathway::Discrete => "discrete",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// `E(Y | M, C1, E, C0)`, evaluated at the baseline level to give `B`.
    Outcome,
    /// `E(M | C1, E, C0)`.
    Mediator,
    /// `E(C1_j | E, C0)`, zero-based `j`.
    C1Mean(usize),
    /// `f(E | C0)` in the inverse-probability weights.
    PropensityC0,
    /// `f(E | C1, C0)`.
    PropensityC1,
    /// `f(E | M, C1, C0)`.
    PropensityM,
    /// `f(E | C0)` inside the C1 density ratio, when it differs from the weights.
    PropensityC0Ratio,
    /// `f(E | C1, C0)` inside the M density ratio, when it differs from the C1 ratio.
    PropensityC1MRatio,
    /// `E(Y | E, C0)` for the baseline mean.
    OutcomeMarginal,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Outcome => f.write_str("outcome"),
            Role::Mediator => f.write_str("mediator"),
            Role::C1Mean(j) => write!(f, "c1_mean[{}]", j + 1),
            Role::PropensityC0 => f.write_str("propensity_c0"),
            Role::PropensityC1 => f.write_str("propensity_c1"),
            Role::PropensityM => f.write_str("propensity_m"),
            Role::PropensityC0Ratio => f.write_str("propensity_c0_ratio"),
            Role::PropensityC1MRatio => f.write_str("propensity_c1_mratio"),
            Role::OutcomeMarginal => f.write_str("outcome_marginal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NuisanceError {
    Design { role: Role, source: DesignError },
    Fit { role: Role, source: GlmError },
    Family { role: Role, family: Family, reason: &'static str },
    C1Models { expected: usize, found: usize },
    NotBinary { column: String },
    Positivity { role: Role, row: usize },
    DegenerateShare { level: u32 },
    TooManyC1 { d1: usize },
}

impl core::error::Error for NuisanceError {}

impl fmt::Display for NuisanceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Design { role, source } => write!(f, "{role}: {source}"),
            Self::Fit { role, source } => write!(f, "{role}: {source}"),
            Self::Family { role, family, reason } => write!(f, "{role}: family {family} not allowed ({reason})"),
            Self::C1Models { expected, found } => {
                write!(f, "expected {expected} c1 mean models, found {found}")
            }
            Self::NotBinary { column } => write!(f, "discrete pathway needs binary {column}"),
            Self::Positivity { role, row } => {
                write!(f, "{role}: fitted probability at 0 or 1 for record {row}")
            }
            Self::DegenerateShare { level } => {
                write!(f, "cannot stabilize: every record is at level {level} or none is")
            }
            Self::TooManyC1 { d1 } => write!(f, "discrete pathway supports at most 16 c1 components, got {d1}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub design: DesignSpec,
    pub family: Family,
}

impl ModelSpec {
    pub fn new(design: DesignSpec, family: Family) -> Self {
        Self { design, family }
    }
}

/// One model per role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkingModelSet {
    pub outcome: ModelSpec,
    pub mediator: ModelSpec,
    pub c1_means: Vec<ModelSpec>,
    pub propensity_c0: ModelSpec,
    pub propensity_c1: ModelSpec,
    pub propensity_m: ModelSpec,
    pub propensity_c0_ratio: Option<ModelSpec>,
    pub propensity_c1_mratio: Option<ModelSpec>,
    pub outcome_marginal: ModelSpec,
}

impl WorkingModelSet {
    /// Every `(role, spec)` pair, optional roles included when present.
    pub fn roles(&self) -> Vec<(Role, &ModelSpec)> {
        let mut out = vec![(Role::Outcome, &self.outcome), (Role::Mediator, &self.mediator)];
        out.extend(self.c1_means.iter().enumerate().map(|(j, s)| (Role::C1Mean(j), s)));
        out.push((Role::PropensityC0, &self.propensity_c0));
        out.push((Role::PropensityC1, &self.propensity_c1));
        out.push((Role::PropensityM, &self.propensity_m));
        if let Some(s) = &self.propensity_c0_ratio {
            out.push((Role::PropensityC0Ratio, s));
        }
        if let Some(s) = &self.propensity_c1_mratio {
            out.push((Role::PropensityC1MRatio, s));
        }
        out.push((Role::OutcomeMarginal, &self.outcome_marginal));
        out
    }

    /// Structural checks: column references, allowed regressors per role,
    /// families, and linearity for the linear pathway.
    pub fn validate(&self, pathway: Pathway, d0: usize, d1: usize) -> Result<(), NuisanceError> {
        if self.c1_means.len() != d1 {
            return Err(NuisanceError::C1Models { expected: d1, found: self.c1_means.len() });
        }
        for (role, spec) in self.roles() {
            let derr = |source| NuisanceError::Design { role, source };
            spec.design.check_resolves(d0, d1).map_err(derr)?;
            let (allowed, reason): (fn(Col) -> bool, &'static str) = match role {
                Role::Outcome => (|_| true, ""),
                Role::Mediator => (|c| c != Col::M, "the mediator model cannot use m"),
                Role::C1Mean(_) | Role::OutcomeMarginal => {
                    (|c| matches!(c, Col::C0(_) | Col::E), "only c0 and e are allowed")
                }
                Role::PropensityC0 | Role::PropensityC0Ratio => {
                    (|c| matches!(c, Col::C0(_)), "only c0 is allowed")
                }
                Role::PropensityC1 | Role::PropensityC1MRatio => {
                    (|c| matches!(c, Col::C0(_) | Col::C1(_)), "only c0 and c1 are allowed")
                }
                Role::PropensityM => (|c| c != Col::E, "e is the response"),
            };
            spec.design.check_columns(allowed, reason).map_err(derr)?;
            let family_ok = match role {
                Role::PropensityC0
                | Role::PropensityC1
                | Role::PropensityM
                | Role::PropensityC0Ratio
                | Role::PropensityC1MRatio => spec.family.is_binomial(),
                Role::Outcome => pathway == Pathway::Discrete || spec.family == Family::Gaussian,
                Role::Mediator | Role::C1Mean(_) => match pathway {
                    Pathway::Linear => spec.family == Family::Gaussian,
                    Pathway::Discrete => spec.family.is_binomial(),
                },
                Role::OutcomeMarginal => true,
            };
            if !family_ok {
                let reason = match role {
                    Role::Outcome | Role::Mediator | Role::C1Mean(_) if pathway == Pathway::Linear => {
                        "the linear pathway needs gaussian means"
                    }
                    Role::Mediator | Role::C1Mean(_) => "the discrete pathway needs binomial models",
                    _ => "propensity models are binomial",
                };
                return Err(NuisanceError::Family { role, family: spec.family, reason });
            }
            if pathway == Pathway::Linear && matches!(role, Role::Outcome | Role::Mediator) {
                spec.design.check_linear_pathway().map_err(derr)?;
            }
        }
        if pathway == Pathway::Discrete && d1 > 16 {
            return Err(NuisanceError::TooManyC1 { d1 });
        }
        Ok(())
    }
}

/// Design matrix of every record under common overrides.
pub fn design_matrix(records: &[Record], spec: &DesignSpec, ov: &Overrides<'_>) -> Matrix {
    let p = spec.len();
    let mut data = Vec::with_capacity(records.len() * p);
    let mut row = Vec::with_capacity(p);
    for r in records {
        spec.fill_row(r, ov, &mut row);
        data.extend_from_slice(&row);
    }
    Matrix::from_row_major(records.len(), p, data).expect("row length matches design")
}

/// The fitted working models, keyed by role.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFits {
    pub pathway: Pathway,
    /// Treatment pair in the internal coding.
    pub pair: TreatmentPair,
    pub outcome: FittedGlm,
    pub mediator: FittedGlm,
    pub c1_means: Vec<FittedGlm>,
    pub propensity_c0: FittedGlm,
    pub propensity_c1: FittedGlm,
    pub propensity_m: FittedGlm,
    pub propensity_c0_ratio: Option<FittedGlm>,
    pub propensity_c1_mratio: Option<FittedGlm>,
    pub outcome_marginal: FittedGlm,
}

pub(crate) fn response(records: &[Record], role: Role) -> Vec<f64> {
    records
        .iter()
        .map(|r| match role {
            Role::Outcome | Role::OutcomeMarginal => r.y,
            Role::Mediator => r.m,
            Role::C1Mean(j) => r.c1[j],
            _ => f64::from(r.e),
        })
        .collect()
}

/// Fits one role by maximum likelihood on the prepared pair data.
pub fn fit_role(
    records: &[Record],
    role: Role,
    spec: &ModelSpec,
    weights: Option<&[f64]>,
) -> Result<FittedGlm, NuisanceError> {
    let x = design_matrix(records, &spec.design, &Overrides::NONE);
    let y = response(records, role);
    glm::fit_glm(&x, &y, spec.family, weights, IrlsOptions::default())
        .map(|f| f.with_design(spec.design.clone()))
        .map_err(|source| NuisanceError::Fit { role, source })
}

/// Fits every working model on the pair data, with optional per-row weights
/// applied to all of them.
pub fn fit_nuisances(
    data: &PairData,
    set: &WorkingModelSet,
    pathway: Pathway,
    weights: Option<&[f64]>,
) -> Result<NuisanceFits, NuisanceError> {
    let ds = data.data();
    set.validate(pathway, ds.d0(), ds.d1())?;
    if pathway == Pathway::Discrete {
        if !ds.mediator_is_binary() {
            return Err(NuisanceError::NotBinary { column: "m".into() });
        }
        if !ds.c1_is_binary() {
            return Err(NuisanceError::NotBinary { column: "c1".into() });
        }
    }
    let recs = ds.records();
    let fit = |role, spec| fit_role(recs, role, spec, weights);
    let c1_means = set
        .c1_means
        .iter()
        .enumerate()
        .map(|(j, s)| fit(Role::C1Mean(j), s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NuisanceFits {
        pathway,
        pair: data.coded_pair(),
        outcome: fit(Role::Outcome, &set.outcome)?,
        mediator: fit(Role::Mediator, &set.mediator)?,
        c1_means,
        propensity_c0: fit(Role::PropensityC0, &set.propensity_c0)?,
        propensity_c1: fit(Role::PropensityC1, &set.propensity_c1)?,
        propensity_m: fit(Role::PropensityM, &set.propensity_m)?,
        propensity_c0_ratio: set
            .propensity_c0_ratio
            .as_ref()
            .map(|s| fit(Role::PropensityC0Ratio, s))
            .transpose()?,
        propensity_c1_mratio: set
            .propensity_c1_mratio
            .as_ref()
            .map(|s| fit(Role::PropensityC1MRatio, s))
            .transpose()?,
        outcome_marginal: fit(Role::OutcomeMarginal, &set.outcome_marginal)?,
    })
}

fn design_of(fit: &FittedGlm) -> &DesignSpec {
    fit.design.as_ref().expect("nuisance fits carry their design")
}

fn mean_with(fit: &FittedGlm, rec: &Record, ov: &Overrides<'_>) -> f64 {
    let mut row = Vec::new();
    design_of(fit).fill_row(rec, ov, &mut row);
    fit.mean_at(&row)
}

/// Log-odds of `E = 1` under a binomial model, unclipped.
fn raw_log_odds(fit: &FittedGlm, rec: &Record) -> f64 {
    let mut row = Vec::new();
    design_of(fit).fill_row(rec, &Overrides::NONE, &mut row);
    let eta = fit.linear_predictor(&row);
    match fit.family {
        Family::Logit => eta,
        Family::Probit => ln(norm_cdf(eta)) - ln(norm_cdf(-eta)),
        Family::Gaussian => logit(eta),
    }
}

impl NuisanceFits {
    pub fn get(&self, role: Role) -> Option<&FittedGlm> {
        match role {
            Role::Outcome => Some(&self.outcome),
            Role::Mediator => Some(&self.mediator),
            Role::C1Mean(j) => self.c1_means.get(j),
            Role::PropensityC0 => Some(&self.propensity_c0),
            Role::PropensityC1 => Some(&self.propensity_c1),
            Role::PropensityM => Some(&self.propensity_m),
            Role::PropensityC0Ratio => self.propensity_c0_ratio.as_ref(),
            Role::PropensityC1MRatio => self.propensity_c1_mratio.as_ref(),
            Role::OutcomeMarginal => Some(&self.outcome_marginal),
        }
    }

    /// Base propensity used inside the C1 density ratio.
    pub fn ratio_base(&self) -> &FittedGlm {
        self.propensity_c0_ratio.as_ref().unwrap_or(&self.propensity_c0)
    }

    /// `f(E | C1, C0)` used inside the M density ratio.
    pub fn mratio_c1(&self) -> &FittedGlm {
        self.propensity_c1_mratio.as_ref().unwrap_or(&self.propensity_c1)
    }

    fn baseline(&self) -> f64 {
        f64::from(self.pair.baseline)
    }

    fn comparison(&self) -> f64 {
        f64::from(self.pair.comparison)
    }

    /// Sign `e − e'` of the log-odds in `f(e | X) / f(e' | X)`.
    fn contrast(&self) -> f64 {
        self.comparison() - self.baseline()
    }

    /// `B(m, c1, e', c0)` at the record's own `M` and `C1`.
    pub fn b(&self, rec: &Record) -> f64 {
        mean_with(&self.outcome, rec, &Overrides::e(self.baseline()))
    }

    /// `B'` with `C1` replaced by `c1`.
    pub fn b_prime_at(&self, rec: &Record, c1: &[f64]) -> f64 {
        let e_prime = self.baseline();
        let med = Overrides::e(self.comparison()).with_c1(c1);
        let out = Overrides::e(e_prime).with_c1(c1);
        match self.pathway {
            Pathway::Linear => {
                let m_hat = mean_with(&self.mediator, rec, &med);
                mean_with(&self.outcome, rec, &out.with_m(m_hat))
            }
            Pathway::Discrete => {
                let p1 = mean_with(&self.mediator, rec, &med);
                let b0 = mean_with(&self.outcome, rec, &out.with_m(0.0));
                let b1 = mean_with(&self.outcome, rec, &out.with_m(1.0));
                (1.0 - p1) * b0 + p1 * b1
            }
        }
    }

    /// `B'(C1, e', e, C0)`.
    pub fn b_prime(&self, rec: &Record) -> f64 {
        self.b_prime_at(rec, &rec.c1)
    }

    /// `B''(e', e, C0)`.
    pub fn b_double_prime(&self, rec: &Record) -> f64 {
        let ov = Overrides::e(self.baseline());
        let means: Vec<f64> = self.c1_means.iter().map(|f| mean_with(f, rec, &ov)).collect();
        match self.pathway {
            Pathway::Linear => self.b_prime_at(rec, &means),
            Pathway::Discrete => {
                let d1 = means.len();
                let mut c1 = vec![0.0; d1];
                let mut total = 0.0;
                for mask in 0u32..(1u32 << d1) {
                    let mut prob = 1.0;
                    for (j, (cj, pj)) in c1.iter_mut().zip(&means).enumerate() {
                        let on = mask >> j & 1 == 1;
                        *cj = if on { 1.0 } else { 0.0 };
                        prob *= if on { *pj } else { 1.0 - pj };
                    }
                    if prob != 0.0 {
                        total += prob * self.b_prime_at(rec, &c1);
                    }
                }
                total
            }
        }
    }

    /// `E(Y | e', C0)` from the marginal outcome model.
    pub fn marginal_mean(&self, rec: &Record) -> f64 {
        mean_with(&self.outcome_marginal, rec, &Overrides::e(self.baseline()))
    }
}

fn checked_log_odds(fit: &FittedGlm, rec: &Record, role: Role, row: usize) -> Result<f64, NuisanceError> {
    let lo = raw_log_odds(fit, rec);
    if lo.is_finite() {
        Ok(lo)
    } else {
        Err(NuisanceError::Positivity { role, row })
    }
}

/// `M^ratio` for one record from the unstabilized, unclipped propensities.
pub fn m_ratio(fits: &NuisanceFits, rec: &Record, row: usize) -> Result<f64, NuisanceError> {
    let lm = checked_log_odds(&fits.propensity_m, rec, Role::PropensityM, row)?;
    let lc = checked_log_odds(fits.mratio_c1(), rec, Role::PropensityC1, row)?;
    Ok(exp(fits.contrast() * (lm - lc)))
}

/// `C1^ratio` for one record from the unstabilized, unclipped propensities.
pub fn c1_ratio(fits: &NuisanceFits, rec: &Record, row: usize) -> Result<f64, NuisanceError> {
    let lc = checked_log_odds(&fits.propensity_c1, rec, Role::PropensityC1, row)?;
    let lb = checked_log_odds(fits.ratio_base(), rec, Role::PropensityC0, row)?;
    Ok(exp(fits.contrast() * (lc - lb)))
}

fn weighted_mean(v: impl Iterator<Item = f64>, w: Option<&[f64]>) -> f64 {
    match w {
        None => {
            let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            s / n as f64
        }
        Some(w) => {
            let s: f64 = v.zip(w).map(|(x, wi)| x * wi).sum();
            s / w.iter().sum::<f64>()
        }
    }
}

/// Logit-shift stabilization of log-odds `lo` of `E = 1` at `level`.
///
/// With `g = logit f(level | X)` the shift is
/// `g† = g − log(1 − Pn 1_level) + log Pn[1_level f(other | X) / f(level | X)]`,
/// after which `Pn[1_level f†(other) / f†(level)] = 1 − Pn 1_level`.
pub fn stabilize_log_odds(lo: &[f64], e: &[u32], level: u32, w: Option<&[f64]>) -> Result<Vec<f64>, NuisanceError> {
    let sign = if level == 1 { 1.0 } else { -1.0 };
    let ind = |i: usize| if e[i] == level { 1.0 } else { 0.0 };
    let share = weighted_mean((0..e.len()).map(ind), w);
    if share <= 0.0 || share >= 1.0 {
        return Err(NuisanceError::DegenerateShare { level });
    }
    let s = weighted_mean((0..e.len()).map(|i| ind(i) * exp(-sign * lo[i])), w);
    let shift = ln(s) - ln(1.0 - share);
    Ok(lo.iter().map(|l| sign * (sign * l + shift)).collect())
}

/// Stabilized `P(E = 1 | X)` from fitted probabilities, see [`stabilize_log_odds`].
pub fn stabilize_propensity(p: &[f64], e: &[u32], level: u32, w: Option<&[f64]>) -> Result<Vec<f64>, NuisanceError> {
    let lo: Vec<f64> = p.iter().map(|&q| logit(q)).collect();
    Ok(stabilize_log_odds(&lo, e, level, w)?.into_iter().map(crate::math::expit).collect())
}

/// Which propensity roles are stabilized. The ratio-internal base follows
/// `base` and the M-ratio `f(E | C1, C0)` follows `c1c0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StabilizeFlags {
    pub base: bool,
    pub c1c0: bool,
    pub mc1c0: bool,
}

impl StabilizeFlags {
    pub const ALL: Self = Self { base: true, c1c0: true, mc1c0: true };
    pub const NONE: Self = Self { base: false, c1c0: false, mc1c0: false };
}

impl Default for StabilizeFlags {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightSummary {
    pub max: f64,
    /// `(Σw)² / Σw²` over the nonzero weights.
    pub ess: f64,
}

impl WeightSummary {
    fn of(w: &[f64]) -> Self {
        let (s, s2, max) = w.iter().fold((0.0, 0.0, 0.0f64), |(s, s2, m), &x| (s + x, s2 + x * x, m.max(abs_f(x))));
        Self { max, ess: if s2 > 0.0 { s * s / s2 } else { 0.0 } }
    }
}

fn abs_f(x: f64) -> f64 {
    crate::math::abs(x)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Records whose fitted propensity was clipped, per role.
    pub clipped: Vec<(Role, usize)>,
    pub w_baseline: WeightSummary,
    pub w_comparison: WeightSummary,
    /// `w' · M^ratio` on the baseline arm.
    pub w_mratio: WeightSummary,
    /// `w / C1^ratio` on the comparison arm.
    pub w_c1ratio: WeightSummary,
}

impl Diagnostics {
    pub fn total_clipped(&self) -> usize {
        self.clipped.iter().map(|(_, c)| c).sum()
    }
}

/// Per-record nuisance quantities feeding every estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceValues {
    pub y: Vec<f64>,
    /// `1_{e'}(E) / f(e' | C0)`.
    pub w_baseline: Vec<f64>,
    /// `1_e(E) / f(e | C0)`.
    pub w_comparison: Vec<f64>,
    pub m_ratio: Vec<f64>,
    pub c1_ratio: Vec<f64>,
    pub b: Vec<f64>,
    pub b_prime: Vec<f64>,
    pub b_double_prime: Vec<f64>,
    /// `E(Y | e', C0)`.
    pub marginal: Vec<f64>,
    /// Row weights for the empirical means (wild bootstrap), `None` for plain means.
    pub row_weights: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl NuisanceValues {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Empirical mean `Pn`, honouring the row weights.
    pub fn mean(&self, v: impl Iterator<Item = f64>) -> f64 {
        weighted_mean(v, self.row_weights.as_deref())
    }
}

fn clip_log_odds(lo: &mut [f64]) -> usize {
    let bound = logit(1.0 - CLIP);
    let mut count = 0;
    for l in lo.iter_mut() {
        if *l > bound || *l < -bound || l.is_nan() {
            *l = if *l > 0.0 { bound } else { -bound };
            count += 1;
        }
    }
    count
}

fn inverse_prob(lo: f64, level: u32) -> f64 {
    // 1 / f(level | X) with f(1) = expit(lo), f(0) = expit(-lo).
    let sign = if level == 1 { 1.0 } else { -1.0 };
    1.0 + exp(-sign * lo)
}

/// Evaluates weights, ratios and nested means on every record.
pub fn evaluate(
    data: &PairData,
    fits: &NuisanceFits,
    flags: StabilizeFlags,
    row_weights: Option<&[f64]>,
) -> Result<NuisanceValues, NuisanceError> {
    let recs = data.data().records();
    let e: Vec<u32> = recs.iter().map(|r| r.e).collect();
    let TreatmentPair { comparison, baseline } = fits.pair;
    let mut clipped = Vec::new();
    let mut log_odds = |fit: &FittedGlm, role: Role| {
        let mut lo: Vec<f64> = recs.iter().map(|r| raw_log_odds(fit, r)).collect();
        let c = clip_log_odds(&mut lo);
        if c > 0 {
            clipped.push((role, c));
        }
        lo
    };
    let base = log_odds(&fits.propensity_c0, Role::PropensityC0);
    let base_ratio = match &fits.propensity_c0_ratio {
        Some(f) => log_odds(f, Role::PropensityC0Ratio),
        None => base.clone(),
    };
    let c1 = log_odds(&fits.propensity_c1, Role::PropensityC1);
    let c1_m = match &fits.propensity_c1_mratio {
        Some(f) => log_odds(f, Role::PropensityC1MRatio),
        None => c1.clone(),
    };
    let m = log_odds(&fits.propensity_m, Role::PropensityM);

    let stab = |lo: &[f64], on: bool, level: u32| -> Result<Vec<f64>, NuisanceError> {
        if on {
            stabilize_log_odds(lo, &e, level, row_weights)
        } else {
            Ok(lo.to_vec())
        }
    };
    // Each propensity is stabilized at the level of the arm it weights.
    let base_at_b = stab(&base, flags.base, baseline)?;
    let base_at_c = stab(&base, flags.base, comparison)?;
    let m_at_b = stab(&m, flags.mc1c0, baseline)?;
    let c1m_at_b = stab(&c1_m, flags.c1c0, baseline)?;
    let c1_at_c = stab(&c1, flags.c1c0, comparison)?;
    let base_ratio_at_c = stab(&base_ratio, flags.base, comparison)?;

    let sign = fits.contrast();
    let n = recs.len();
    let mut vals = NuisanceValues {
        y: Vec::with_capacity(n),
        w_baseline: Vec::with_capacity(n),
        w_comparison: Vec::with_capacity(n),
        m_ratio: Vec::with_capacity(n),
        c1_ratio: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        b_prime: Vec::with_capacity(n),
        b_double_prime: Vec::with_capacity(n),
        marginal: Vec::with_capacity(n),
        row_weights: row_weights.map(<[f64]>::to_vec),
        diagnostics: Diagnostics::default(),
    };
    for (i, r) in recs.iter().enumerate() {
        vals.y.push(r.y);
        let wb = if r.e == baseline { inverse_prob(base_at_b[i], baseline) } else { 0.0 };
        let wc = if r.e == comparison { inverse_prob(base_at_c[i], comparison) } else { 0.0 };
        vals.w_baseline.push(wb);
        vals.w_comparison.push(wc);
        vals.m_ratio.push(exp(sign * (m_at_b[i] - c1m_at_b[i])));
        vals.c1_ratio.push(exp(sign * (c1_at_c[i] - base_ratio_at_c[i])));
        vals.b.push(fits.b(r));
        vals.b_prime.push(fits.b_prime(r));
        vals.b_double_prime.push(fits.b_double_prime(r));
        vals.marginal.push(fits.marginal_mean(r));
    }
    let wm: Vec<f64> = vals.w_baseline.iter().zip(&vals.m_ratio).map(|(w, r)| w * r).collect();
    let wc: Vec<f64> = vals.w_comparison.iter().zip(&vals.c1_ratio).map(|(w, r)| w / r).collect();
    vals.diagnostics = Diagnostics {
        clipped,
        w_baseline: WeightSummary::of(&vals.w_baseline),
        w_comparison: WeightSummary::of(&vals.w_comparison),
        w_mratio: WeightSummary::of(&wm),
        w_c1ratio: WeightSummary::of(&wc),
    };
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::abs;

    #[test]
    fn stabilization_toy_example() {
        // f(1|X) = (0.2, 0.4, 0.6, 0.8), E = (0, 0, 1, 1), level 1.
        let p = [0.2, 0.4, 0.6, 0.8];
        let e = [0, 0, 1, 1];
        let out = stabilize_propensity(&p, &e, 1, None).unwrap();
        // Pn 1_1 = 1/2; Pn[1_1 f(0)/f(1)] = (0.4/0.6 + 0.2/0.8)/4 = 0.229166...
        let s: f64 = (0.4 / 0.6 + 0.2 / 0.8) / 4.0;
        let shift = ln(s) - ln(0.5);
        for (q, o) in p.iter().zip(&out) {
            let expected = crate::math::expit(logit(*q) + shift);
            assert!(abs(o - expected) < 1e-15);
        }
        let lhs: f64 = (0..4).filter(|&i| e[i] == 1).map(|i| (1.0 - out[i]) / out[i]).sum::<f64>() / 4.0;
        assert!(abs(lhs - 0.5) < 1e-14);
    }

    #[test]
    fn stabilization_fixed_point() {
        let e = [0, 1, 1, 0, 1];
        let p = [0.6; 5];
        let out = stabilize_propensity(&p, &e, 1, None).unwrap();
        assert!(out.iter().all(|o| abs(o - 0.6) < 1e-15));
        let out = stabilize_propensity(&p, &e, 0, None).unwrap();
        assert!(out.iter().all(|o| abs(o - 0.6) < 1e-15));
    }

    #[test]
    fn degenerate_share() {
        assert_eq!(
            stabilize_propensity(&[0.5, 0.5], &[1, 1], 1, None),
            Err(NuisanceError::DegenerateShare { level: 1 })
        );
    }
}
