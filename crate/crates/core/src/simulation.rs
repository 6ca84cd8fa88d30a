//! The simulation study: data-generating process, working-model regimes,
//! Monte Carlo runner and oracles for the true `β0` and `δ0`.
//!
//! The law is
//!
//! ```text
//! C0 ~ U(0, 2)
//! E  | C0     ~ Bernoulli(expit(0.9 + 0.3 C0))
//! C1 | E, C0  = a + b C0 + c E + d C0 E + N(0, I3)
//! M  | ...    = -0.5 - 0.2 C0 + 0.3 E + (-0.2, 0.1, 0.5)·C1 + 0.4 E C1_1 + N(0, 1)
//! Y  | ...    = 0.2 + 0.2 C0 + 0.6 E + (1, 0.7, 0.3)·C1 - 0.9 M - 0.8 E M + N(0, 1)
//! ```
//!
//! with `a = (0.8, 0.6, -0.3)`, `b = (1, 0.1, 0.2)`, `c = (0.5, -0.4, 0.5)`,
//! `d = (-0.1, 0.8, -0.2)`. Comparison level is `e = 1`, baseline `e' = 0`.
//! Each variable block draws from its own stream of the replicate seed.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::data::{Dataset, PairData, Record};
use crate::design::{Col, DesignSpec, Term};
use crate::estimators::{self, BetaKind, EstimateError, EstimationConfig};
use crate::glm::{Family, FittedGlm};
use crate::inference::{mc_t_test, TTest};
use crate::math::{expit, sqrt};
use crate::nuisance::{self, ModelSpec, NuisanceError, NuisanceFits, Pathway, Role, StabilizeFlags, WorkingModelSet};
use crate::rng::{derive_seed, streams, StreamRng};

pub const C1_INTERCEPT: [f64; 3] = [0.8, 0.6, -0.3];
pub const C1_C0: [f64; 3] = [1.0, 0.1, 0.2];
pub const C1_E: [f64; 3] = [0.5, -0.4, 0.5];
pub const C1_C0E: [f64; 3] = [-0.1, 0.8, -0.2];
/// `(1, C0)` coefficients of `logit P(E = 1 | C0)`.
pub const ALPHA: [f64; 2] = [0.9, 0.3];
/// `[1, C0, E, C1, E C1_1]` coefficients of `E(M | C1, E, C0)`.
pub const ZETA: [f64; 7] = [-0.5, -0.2, 0.3, -0.2, 0.1, 0.5, 0.4];
/// `[1, C0, E, C1, M, E M]` coefficients of `E(Y | M, C1, E, C0)`.
pub const ETA: [f64; 8] = [0.2, 0.2, 0.6, 1.0, 0.7, 0.3, -0.9, -0.8];

/// True `β0` to the precision quoted for the study.
pub const BETA0: f64 = 2.678;

pub const D0: usize = 1;
pub const D1: usize = 3;

fn c1_mean(c0: f64, e: f64) -> [f64; 3] {
    core::array::from_fn(|j| C1_INTERCEPT[j] + C1_C0[j] * c0 + C1_E[j] * e + C1_C0E[j] * c0 * e)
}

fn m_mean(c0: f64, e: f64, c1: &[f64]) -> f64 {
    ZETA[0] + ZETA[1] * c0 + ZETA[2] * e + ZETA[3] * c1[0] + ZETA[4] * c1[1] + ZETA[5] * c1[2] + ZETA[6] * e * c1[0]
}

fn y_mean(c0: f64, e: f64, c1: &[f64], m: f64) -> f64 {
    ETA[0] + ETA[1] * c0 + ETA[2] * e + ETA[3] * c1[0] + ETA[4] * c1[1] + ETA[5] * c1[2] + ETA[6] * m + ETA[7] * e * m
}

/// Draws `n` records. Deterministic in `seed`.
pub fn draw_dataset(n: usize, seed: u64) -> Dataset {
    assert!(n >= 1, "n must be positive");
    let mut r_c0 = StreamRng::new(seed, streams::C0);
    let mut r_e = StreamRng::new(seed, streams::EXPOSURE);
    let mut r_c1 = StreamRng::new(seed, streams::C1);
    let mut r_m = StreamRng::new(seed, streams::MEDIATOR);
    let mut r_y = StreamRng::new(seed, streams::OUTCOME);
    let records = (0..n)
        .map(|_| {
            let c0 = 2.0 * r_c0.uniform();
            let e = u32::from(r_e.bernoulli(expit(ALPHA[0] + ALPHA[1] * c0)));
            let ef = f64::from(e);
            let mu = c1_mean(c0, ef);
            let c1: Vec<f64> = mu.iter().map(|m| m + r_c1.normal()).collect();
            let m = m_mean(c0, ef, &c1) + r_m.normal();
            let y = y_mean(c0, ef, &c1, m) + r_y.normal();
            Record { c0: vec![c0], e, c1, m, y }
        })
        .collect();
    Dataset::from_records(records, D0, D1)
}

/// Monte Carlo value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    pub se: f64,
}

/// Mean of `Y(M(e_m, C1(e_c1)), C1(e_c1), e_y)` by direct simulation of the
/// structural equations.
pub fn nested_counterfactual_mc(n_draws: usize, seed: u64, e_c1: f64, e_m: f64, e_y: f64) -> OracleValue {
    let mut rng = StreamRng::new(seed, 0);
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..n_draws {
        let c0 = 2.0 * rng.uniform();
        let mu = c1_mean(c0, e_c1);
        let c1 = [mu[0] + rng.normal(), mu[1] + rng.normal(), mu[2] + rng.normal()];
        let m = m_mean(c0, e_m, &c1) + rng.normal();
        let y = y_mean(c0, e_y, &c1, m) + rng.normal();
        sum += y;
        sum2 += y * y;
    }
    let n = n_draws as f64;
    let mean = sum / n;
    let var = (sum2 - n * mean * mean) / (n - 1.0);
    OracleValue { value: mean, se: sqrt(var.max(0.0) / n) }
}

/// `β0 = E[Y(M(1, C1(0)), C1(0), 0)]`.
pub fn oracle_beta0_mc(n_draws: usize, seed: u64) -> OracleValue {
    nested_counterfactual_mc(n_draws, seed, 0.0, 1.0, 0.0)
}

/// `δ0 = E[Y(M(0, C1(0)), C1(0), 0)]`.
pub fn oracle_delta0_mc(n_draws: usize, seed: u64) -> OracleValue {
    nested_counterfactual_mc(n_draws, seed, 0.0, 0.0, 0.0)
}

/// `E[Y(M(e_m, C1(e_c1)), C1(e_c1), e_y) | C0] = intercept + slope C0`,
/// composed exactly from the linear structural equations.
pub fn nested_mean_closed_form(e_c1: f64, e_m: f64, e_y: f64) -> (f64, f64) {
    let at = |c0: f64| {
        let c1 = c1_mean(c0, e_c1);
        y_mean(c0, e_y, &c1, m_mean(c0, e_m, &c1))
    };
    let a = at(0.0);
    (a, at(1.0) - a)
}

/// Closed-form `β0`, `δ0` and effect (`E C0 = 1`).
pub fn closed_form_truth() -> (f64, f64, f64) {
    let (a, b) = nested_mean_closed_form(0.0, 1.0, 0.0);
    let (c, d) = nested_mean_closed_form(0.0, 0.0, 0.0);
    (a + b, c + d, a + b - c - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Int,
    A,
    B,
    C,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Int, Regime::A, Regime::B, Regime::C];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Int => "int",
            Regime::A => "a",
            Regime::B => "b",
            Regime::C => "c",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "int" => Regime::Int,
            "a" => Regime::A,
            "b" => Regime::B,
            "c" => Regime::C,
            _ => return None,
        })
    }

    /// Roles whose working model is misspecified.
    pub fn incorrect_roles(self) -> &'static [Role] {
        match self {
            Regime::Int => &[],
            Regime::A => &[Role::Outcome, Role::C1Mean(0), Role::C1Mean(1), Role::C1Mean(2), Role::PropensityC1],
            Regime::B => &[Role::Mediator, Role::PropensityM],
            Regime::C => &[Role::PropensityC0],
        }
    }

    /// Estimators expected to be consistent.
    pub fn consistent(self) -> &'static [BetaKind] {
        match self {
            Regime::Int => &BetaKind::STANDARD,
            Regime::A => &[BetaKind::A, BetaKind::Mr],
            Regime::B => &[BetaKind::B, BetaKind::Mr],
            Regime::C => &[BetaKind::Mle, BetaKind::Mr],
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn spec(terms: &str) -> DesignSpec {
    DesignSpec::parse(terms, D0, D1).expect("study designs parse")
}

/// Term lists of the correct and incorrect working models.
pub mod designs {
    pub const ALPHA: &str = "1, c0";
    pub const ETA_C: &str = "1, c0, e, c1, m, e*m";
    pub const ETA_I: &str = "1, c0, e, c1, m";
    pub const ZETA_C: &str = "1, c0, e, c1, e*c1_1";
    pub const ZETA_I: &str = "1, c0, e, c1";
    pub const DELTA_C: &str = "1, c0, e, c0*e";
    pub const DELTA_I: &str = "1, c0, e";
    pub const LAMBDA_C: &str = "1, c0, c0^2, c1, c0*c1";
    pub const LAMBDA_I: &str = "1, c0, c1";
    pub const GAMMA_C: &str = "1, c0, c0^2, c1, c0*c1, c1_1*c1, m, c1_1*m";
    pub const GAMMA_I: &str = "1, c0, c1, m";
    pub const MARGINAL: &str = "1, c0, e, c0*e";
}

/// Working models of a regime.
pub fn working_models_for(regime: Regime) -> WorkingModelSet {
    use designs::*;
    let g = |t| ModelSpec::new(spec(t), Family::Gaussian);
    let l = |t| ModelSpec::new(spec(t), Family::Logit);
    let correct = WorkingModelSet {
        outcome: g(ETA_C),
        mediator: g(ZETA_C),
        c1_means: vec![g(DELTA_C); D1],
        propensity_c0: l(ALPHA),
        propensity_c1: l(LAMBDA_C),
        propensity_m: l(GAMMA_C),
        propensity_c0_ratio: None,
        propensity_c1_mratio: None,
        outcome_marginal: g(MARGINAL),
    };
    match regime {
        Regime::Int => correct,
        Regime::A => WorkingModelSet {
            outcome: g(ETA_I),
            c1_means: vec![g(DELTA_I); D1],
            propensity_c1: l(LAMBDA_I),
            propensity_c1_mratio: Some(l(LAMBDA_C)),
            ..correct
        },
        Regime::B => WorkingModelSet { mediator: g(ZETA_I), propensity_m: l(GAMMA_I), ..correct },
        Regime::C => WorkingModelSet {
            propensity_c0: ModelSpec::new(spec(ALPHA), Family::Probit),
            propensity_c0_ratio: Some(l(ALPHA)),
            ..correct
        },
    }
}

fn coefficients(design: &DesignSpec, values: &[(Term, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; design.len()];
    for (t, v) in values {
        let k = design.position(*t).expect("term belongs to the design");
        out[k] += v;
    }
    out
}

fn c0() -> Col {
    Col::C0(0)
}

/// True `logit P(E = 1 | C1, C0)` on the `LAMBDA_C` design: the base
/// log-odds plus the log ratio of the two normal `C1` densities.
pub fn true_lambda() -> Vec<f64> {
    use Term::*;
    // (μ1 − μ0)·c1 − ½(μ1 − μ0)·(μ1 + μ0), μ1 − μ0 = c + d C0, μ1 + μ0 = 2a + c + (2b + d) C0.
    let mut terms = vec![(Intercept, ALPHA[0]), (Covariate(c0()), ALPHA[1])];
    for j in 0..D1 {
        let (a, b, c, d) = (C1_INTERCEPT[j], C1_C0[j], C1_E[j], C1_C0E[j]);
        terms.push((Covariate(Col::C1(j)), c));
        terms.push((Term::product(c0(), Col::C1(j)), d));
        terms.push((Intercept, -0.5 * c * (2.0 * a + c)));
        terms.push((Covariate(c0()), -0.5 * (d * (2.0 * a + c) + c * (2.0 * b + d))));
        terms.push((Square(c0()), -0.5 * d * (2.0 * b + d)));
    }
    coefficients(&spec(designs::LAMBDA_C), &terms)
}

/// True `logit P(E = 1 | M, C1, C0)` on the `GAMMA_C` design.
pub fn true_gamma() -> Vec<f64> {
    use Term::*;
    let design = spec(designs::GAMMA_C);
    let lambda = true_lambda();
    let lambda_design = spec(designs::LAMBDA_C);
    let mut terms: Vec<(Term, f64)> = lambda_design.terms().iter().copied().zip(lambda).collect();
    // ν1 − ν0 = Δ = z_e + z_ec C1_1 and ν0 = z0 + z_c0 C0 + ζ_C1·C1; the log
    // density ratio is Δ m − Δ ν0 − ½ Δ².
    let (ze, zec) = (ZETA[2], ZETA[6]);
    let c11 = Col::C1(0);
    terms.push((Covariate(Col::M), ze));
    terms.push((Term::product(c11, Col::M), zec));
    let nu0: [(Term, f64); 5] = [
        (Intercept, ZETA[0]),
        (Covariate(c0()), ZETA[1]),
        (Covariate(Col::C1(0)), ZETA[3]),
        (Covariate(Col::C1(1)), ZETA[4]),
        (Covariate(Col::C1(2)), ZETA[5]),
    ];
    for (t, v) in nu0 {
        terms.push((t, -ze * v));
        let times_c11 = match t {
            Intercept => Covariate(c11),
            Covariate(c) => Term::product(c11, c),
            _ => unreachable!(),
        };
        terms.push((times_c11, -zec * v));
    }
    terms.push((Intercept, -0.5 * ze * ze));
    terms.push((Covariate(c11), -ze * zec));
    terms.push((Square(c11), -0.5 * zec * zec));
    coefficients(&design, &terms)
}

/// True `E(C1_j | E, C0)` on `DELTA_C`.
pub fn true_delta(j: usize) -> Vec<f64> {
    vec![C1_INTERCEPT[j], C1_C0[j], C1_E[j], C1_C0E[j]]
}

/// True `E(Y | E, C0)` on `MARGINAL`.
pub fn true_marginal() -> Vec<f64> {
    let (a0, b0) = nested_mean_closed_form(0.0, 0.0, 0.0);
    let (a1, b1) = nested_mean_closed_form(1.0, 1.0, 1.0);
    vec![a0, b0, a1 - a0, b1 - b0]
}

/// Working models fixed at their true values (all correct).
pub fn true_fits() -> NuisanceFits {
    use designs::*;
    let fixed = |family, d: &str, c: Vec<f64>| FittedGlm::from_coefficients(family, Some(spec(d)), c);
    NuisanceFits {
        pathway: Pathway::Linear,
        pair: crate::data::TreatmentPair::new(1, 0),
        outcome: fixed(Family::Gaussian, ETA_C, ETA.to_vec()),
        mediator: fixed(Family::Gaussian, ZETA_C, ZETA.to_vec()),
        c1_means: (0..D1).map(|j| fixed(Family::Gaussian, DELTA_C, true_delta(j))).collect(),
        propensity_c0: fixed(Family::Logit, ALPHA, crate::simulation::ALPHA.to_vec()),
        propensity_c1: fixed(Family::Logit, LAMBDA_C, true_lambda()),
        propensity_m: fixed(Family::Logit, GAMMA_C, true_gamma()),
        propensity_c0_ratio: None,
        propensity_c1_mratio: None,
        outcome_marginal: fixed(Family::Gaussian, MARGINAL, true_marginal()),
    }
}

/// True values for the correct components of `regime`, probability-limit
/// fits (maximum likelihood on `large`) for the incorrect ones.
pub fn pattern_fits(regime: Regime, large: &Dataset) -> Result<NuisanceFits, NuisanceError> {
    let set = working_models_for(regime);
    let data = PairData::from_coded(large.clone()).expect("simulated data has both arms");
    let recs = data.data().records();
    let mut fits = true_fits();
    for &role in regime.incorrect_roles() {
        let spec = match role {
            Role::Outcome => &set.outcome,
            Role::Mediator => &set.mediator,
            Role::C1Mean(j) => &set.c1_means[j],
            Role::PropensityC0 => &set.propensity_c0,
            Role::PropensityC1 => &set.propensity_c1,
            Role::PropensityM => &set.propensity_m,
            _ => unreachable!("regimes only misspecify primary roles"),
        };
        let fit = nuisance::fit_role(recs, role, spec, None)?;
        match role {
            Role::Outcome => fits.outcome = fit,
            Role::Mediator => fits.mediator = fit,
            Role::C1Mean(j) => fits.c1_means[j] = fit,
            Role::PropensityC0 => {
                fits.propensity_c0_ratio = Some(fits.propensity_c0.clone());
                fits.propensity_c0 = fit;
            }
            Role::PropensityC1 => {
                fits.propensity_c1_mratio = Some(fits.propensity_c1.clone());
                fits.propensity_c1 = fit;
            }
            Role::PropensityM => fits.propensity_m = fit,
            _ => unreachable!(),
        }
    }
    Ok(fits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub regime: Regime,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
    pub stabilize: StabilizeFlags,
    /// Also run the sequential multiply-robust estimator.
    pub sequential: bool,
}

impl SimulationSpec {
    /// Desk scale: 200 replications of size 1000.
    pub fn desk(regime: Regime, seed: u64) -> Self {
        Self { regime, n: 1000, replications: 200, seed, alpha: 0.05, stabilize: StabilizeFlags::NONE, sequential: false }
    }

    /// The full study: 1000 replications of size 1000.
    pub fn full_scale(regime: Regime, seed: u64) -> Self {
        Self { replications: 1000, ..Self::desk(regime, seed) }
    }

    pub fn estimators(&self) -> Vec<BetaKind> {
        let mut k = BetaKind::STANDARD.to_vec();
        if self.sequential {
            k.push(BetaKind::MrSequential);
        }
        k
    }

    pub fn config(&self) -> EstimationConfig {
        EstimationConfig { models: working_models_for(self.regime), pathway: Pathway::Linear, stabilize: self.stabilize }
    }
}

/// Estimates from one replicate, in the order of [`SimulationSpec::estimators`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub rep: usize,
    pub outcome: Result<Vec<(BetaKind, f64)>, EstimateError>,
}

/// Draws replicate `rep` and computes every estimator on it.
pub fn run_replicate(spec: &SimulationSpec, rep: usize) -> ReplicateResult {
    let data = draw_dataset(spec.n, derive_seed(spec.seed, rep as u64));
    let outcome = (|| {
        let pd = PairData::from_coded(data)?;
        let all = estimators::estimate_all(&pd, &spec.config(), None, spec.sequential)?;
        Ok(spec.estimators().into_iter().map(|k| (k, all.beta(k).expect("requested estimator computed"))).collect())
    })();
    ReplicateResult { rep, outcome }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub kind: BetaKind,
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub spec: SimulationSpec,
    pub hypothesized: f64,
    pub summaries: Vec<EstimatorSummary>,
    pub replicates: Vec<ReplicateResult>,
    pub failures: usize,
}

impl RegimeReport {
    pub fn summary(&self, kind: BetaKind) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimulationError {
    TooManyFailures { failed: usize, total: usize, first: String },
    TooFewReplicates,
}

impl core::error::Error for SimulationError {}

impl fmt::Display for SimulationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooManyFailures { failed, total, first } => {
                write!(f, "{failed} of {total} replicates failed (more than 1%); first error: {first}")
            }
            Self::TooFewReplicates => f.write_str("at least two replicates are needed"),
        }
    }
}

/// Aggregates replicate results into t tests against `β0`. More than 1%
/// failed replicates is an error.
pub fn summarize(spec: &SimulationSpec, mut replicates: Vec<ReplicateResult>) -> Result<RegimeReport, SimulationError> {
    replicates.sort_by_key(|r| r.rep);
    let total = replicates.len();
    let failed: Vec<&ReplicateResult> = replicates.iter().filter(|r| r.outcome.is_err()).collect();
    if failed.len() * 100 > total {
        let first = match &failed[0].outcome {
            Err(e) => alloc::format!("replicate {}: {e}", failed[0].rep),
            Ok(_) => unreachable!(),
        };
        return Err(SimulationError::TooManyFailures { failed: failed.len(), total, first });
    }
    let failures = failed.len();
    let mut summaries = Vec::new();
    for kind in spec.estimators() {
        let values: Vec<f64> = replicates
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok())
            .map(|v| v.iter().find(|(k, _)| *k == kind).expect("every estimator recorded").1)
            .collect();
        let test = mc_t_test(&values, BETA0, spec.alpha).map_err(|_| SimulationError::TooFewReplicates)?;
        summaries.push(EstimatorSummary { kind, test });
    }
    Ok(RegimeReport { spec: spec.clone(), hypothesized: BETA0, summaries, replicates, failures })
}

/// Runs every replicate in order on the current thread.
pub fn run_monte_carlo(spec: &SimulationSpec) -> Result<RegimeReport, SimulationError> {
    let reps = (0..spec.replications).map(|r| run_replicate(spec, r)).collect();
    summarize(spec, reps)
}

impl fmt::Display for RegimeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "regime {}  n = {}  R = {}  seed = {}  failures = {}",
            self.spec.regime, self.spec.n, self.spec.replications, self.spec.seed, self.failures
        )?;
        writeln!(
            f,
            "{:<8} {:>10} {:>10} {:>10} {:>10} {:>9} {:>7}",
            "beta", "mean", "mc_se", "ci_low", "ci_high", "t", "reject"
        )?;
        for s in &self.summaries {
            let t = &s.test;
            writeln!(
                f,
                "{:<8} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>9.3} {:>7}",
                s.kind.name(),
                t.mean,
                t.se,
                t.ci_lower,
                t.ci_upper,
                t.t,
                if t.reject { "yes" } else { "no" }
            )?;
        }
        Ok(())
    }
}

impl ReplicateResult {
    pub fn error_message(&self) -> Option<String> {
        self.outcome.as_ref().err().map(ToString::to_string)
    }
}
