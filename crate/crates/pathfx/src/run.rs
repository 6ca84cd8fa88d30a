//! Command drivers shared by the binary and the tests.
//!
//! Exit codes: 0 success, 1 data or runtime failure, 2 argument or
//! configuration error, 3 estimation failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use pathfx_core::data::{DataError, Dataset, PairData, TreatmentPair};
use pathfx_core::estimators::{self, combine_effect, BetaKind, EffectScale, EstimateError, EstimateResult, EstimationConfig, EstimatorKind};
use pathfx_core::inference::{draw_resample, interval_from_replicates, BootstrapSpec, IntervalEstimate, Resample};
use pathfx_core::rng::derive_seed;
use pathfx_core::simulation::{self, OracleValue, RegimeReport, ReplicateResult, SimulationError, SimulationSpec};
use rayon::prelude::*;

use crate::config::ConfigError;
use crate::io::IoError;
use crate::report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Input(#[from] IoError),
    #[error("{0}")]
    Data(DataError),
    #[error("{0}")]
    Simulation(SimulationError),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) | Self::Data(DataError::IdentityPair { .. }) => 2,
            Self::Estimation(_) => 3,
            _ => 1,
        }
    }
}

pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| CliError::Usage(e.to_string()))
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.to_path_buf(), source })?;
    }
    fs::File::create(path).map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

/// Runs every replicate on `pool`, writes `replicates.csv` and
/// `summary.csv` under `out`, and returns the report.
pub fn simulate(spec: &SimulationSpec, out: &Path, pool: &rayon::ThreadPool) -> Result<RegimeReport, CliError> {
    if spec.replications < 2 || spec.n < 10 {
        return Err(CliError::Usage("need --reps >= 2 and --n >= 10".into()));
    }
    let reps: Vec<ReplicateResult> =
        pool.install(|| (0..spec.replications).into_par_iter().map(|r| simulation::run_replicate(spec, r)).collect());
    report::write_replicates(create(&out.join("replicates.csv"))?, spec.regime, &reps)?;
    let report = simulation::summarize(spec, reps).map_err(CliError::Simulation)?;
    report::write_summary(create(&out.join("summary.csv"))?, &report)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub pair: TreatmentPair,
    pub identity_check: bool,
    pub estimators: Vec<EstimatorKind>,
    pub scale: EffectScale,
    pub config: EstimationConfig,
    pub bootstrap: Option<BootstrapSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub result: EstimateResult,
    pub interval: Option<IntervalEstimate>,
    pub bootstrap: String,
}

/// Every requested estimator from one set of nuisance fits.
pub fn all_effects(
    data: &PairData,
    opts: &EstimateOptions,
    row_weights: Option<&[f64]>,
) -> Result<Vec<EstimateResult>, EstimateError> {
    let sequential = opts.estimators.iter().any(|k| k.beta == BetaKind::MrSequential);
    let all = estimators::estimate_all(data, &opts.config, row_weights, sequential)?;
    opts.estimators
        .iter()
        .map(|&kind| {
            let beta_hat = all.beta(kind.beta).expect("sequential estimate computed when requested");
            let delta_hat = all.delta(kind.delta);
            Ok(EstimateResult {
                beta_hat,
                delta_hat,
                effect: combine_effect(beta_hat, delta_hat, opts.scale)?,
                scale: opts.scale,
                pair: data.original_pair(),
                kind,
                n_used: data.data().len(),
                stabilize: opts.config.stabilize,
                diagnostics: all.diagnostics.clone(),
            })
        })
        .collect()
}

/// Point estimates and, when requested, bootstrap intervals that refit
/// every model in every replicate.
pub fn estimate(dataset: &Dataset, opts: &EstimateOptions, pool: &rayon::ThreadPool) -> Result<Vec<EstimateRow>, CliError> {
    let data = PairData::prepare(dataset, opts.pair, opts.identity_check).map_err(CliError::Data)?;
    opts.config
        .models
        .validate(opts.config.pathway, dataset.d0(), dataset.d1())
        .map_err(|e| CliError::Usage(format!("working models: {e}")))?;
    let points = all_effects(&data, opts, None).map_err(|e| CliError::Estimation(e.to_string()))?;
    let Some(spec) = opts.bootstrap else {
        return Ok(points.into_iter().map(|result| EstimateRow { result, interval: None, bootstrap: "none".into() }).collect());
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let n = data.data().len();
    let reps: Vec<(usize, Result<Vec<f64>, String>)> = pool.install(|| {
        (0..spec.replicates)
            .into_par_iter()
            .map(|r| {
                let out = match draw_resample(spec.kind, n, spec.seed, r) {
                    Resample::Rows(idx) => all_effects(&data.with_data(data.data().select(&idx)), opts, None),
                    Resample::Weights(w) => all_effects(&data, opts, Some(&w)),
                };
                (r, out.map(|v| v.iter().map(|e| e.effect).collect()).map_err(|e| e.to_string()))
            })
            .collect()
    });
    points
        .into_iter()
        .enumerate()
        .map(|(k, result)| {
            let per_kind = reps.iter().map(|(r, v)| (*r, v.as_ref().map(|v| v[k]).map_err(Clone::clone))).collect();
            let interval = interval_from_replicates(result.effect, &spec, per_kind)
                .map_err(|e| CliError::Estimation(format!("{}: {e}", result.kind)))?;
            Ok(EstimateRow { result, interval: Some(interval), bootstrap: spec.kind.name().into() })
        })
        .collect()
}

/// Writes `estimates.csv` and `bootstrap.csv` under `out`.
pub fn write_estimate_outputs(rows: &[EstimateRow], out: &Path) -> Result<(), CliError> {
    report::write_estimates(create(&out.join("estimates.csv"))?, rows)?;
    if rows.iter().any(|r| r.interval.is_some()) {
        let mut wtr = csv::Writer::from_writer(create(&out.join("bootstrap.csv"))?);
        wtr.write_record(["estimator", "index", "effect"])?;
        for r in rows {
            for (i, v) in r.interval.iter().flat_map(|iv| iv.replicate_values.iter().enumerate()) {
                wtr.write_record([r.result.kind.beta.name().to_string(), i.to_string(), v.to_string()])?;
            }
        }
        wtr.flush().map_err(|e| CliError::Csv(e.into()))?;
    }
    Ok(())
}

pub const MIN_ORACLE_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub draws: usize,
    pub beta0: OracleValue,
    pub delta0: OracleValue,
    /// Closed-form `(β0, δ0, effect)`.
    pub closed_form: (f64, f64, f64),
    /// `E[Y(M(1, C1(0)), C1(0), 0) | C0] = a + b C0`.
    pub beta_line: (f64, f64),
    pub delta_line: (f64, f64),
}

impl OracleReport {
    pub fn effect(&self) -> OracleValue {
        OracleValue {
            value: self.beta0.value - self.delta0.value,
            se: (self.beta0.se.powi(2) + self.delta0.se.powi(2)).sqrt(),
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (cb, cd, ce) = self.closed_form;
        let e = self.effect();
        writeln!(f, "draws   {}", self.draws)?;
        writeln!(f, "beta0   {:.6}  mc_se {:.6}  closed_form {:.6}", self.beta0.value, self.beta0.se, cb)?;
        writeln!(f, "delta0  {:.6}  mc_se {:.6}  closed_form {:.6}", self.delta0.value, self.delta0.se, cd)?;
        writeln!(f, "effect  {:.6}  mc_se {:.6}  closed_form {:.6}", e.value, e.se, ce)?;
        writeln!(f, "E[Y(M(1,C1(0)),C1(0),0) | C0] = {:.6} + {:.6} C0", self.beta_line.0, self.beta_line.1)?;
        write!(f, "E[Y(M(0,C1(0)),C1(0),0) | C0] = {:.6} + {:.6} C0", self.delta_line.0, self.delta_line.1)
    }
}

/// Monte Carlo `β0` and `δ0` from independent streams of `seed`.
pub fn oracle(draws: usize, seed: u64, pool: &rayon::ThreadPool) -> Result<OracleReport, CliError> {
    if draws < MIN_ORACLE_DRAWS {
        return Err(CliError::Usage(format!("--draws must be at least {MIN_ORACLE_DRAWS}")));
    }
    let (beta0, delta0) = pool.install(|| {
        rayon::join(
            || simulation::oracle_beta0_mc(draws, derive_seed(seed, 0)),
            || simulation::oracle_delta0_mc(draws, derive_seed(seed, 1)),
        )
    });
    Ok(OracleReport {
        draws,
        beta0,
        delta0,
        closed_form: simulation::closed_form_truth(),
        beta_line: simulation::nested_mean_closed_form(0.0, 1.0, 0.0),
        delta_line: simulation::nested_mean_closed_form(0.0, 0.0, 0.0),
    })
}

/// Writes one simulated dataset as CSV.
pub fn draw(n: usize, seed: u64, path: &Path) -> Result<Dataset, CliError> {
    if n < 1 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let data = simulation::draw_dataset(n, seed);
    crate::io::write_dataset_to(create(path)?, &data)?;
    Ok(data)
}
