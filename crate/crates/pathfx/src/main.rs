use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pathfx::config::{self, ConfigFile, StabilizeValue};
use pathfx::io::{self, CsvOptions};
use pathfx::report;
use pathfx::run::{self, CliError, EstimateOptions};
use pathfx_core::data::TreatmentPair;
use pathfx_core::estimators::{BetaKind, DeltaKind, EffectScale, EstimationConfig, EstimatorKind};
use pathfx_core::inference::{BootstrapKind, BootstrapSpec, WildWeights};
use pathfx_core::nuisance::{Pathway, StabilizeFlags};
use pathfx_core::simulation::{Regime, SimulationSpec};

#[derive(Parser)]
#[command(name = "pathfx", version, about = "Path-specific effects through a mediator with exposure-induced confounding")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "PATHFX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo study of one working-model regime.
    Simulate(SimulateArgs),
    /// Estimate effects from a CSV file.
    Estimate(EstimateArgs),
    /// Monte Carlo values of the true nested means.
    Oracle(OracleArgs),
    /// Write one simulated dataset as CSV.
    Draw(DrawArgs),
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    Regime::from_name(s).ok_or_else(|| format!("unknown regime {s:?} (int, a, b, c)"))
}

fn parse_flags(s: &str) -> Result<StabilizeFlags, String> {
    config::stabilize_from_str(s).map_err(|e| e.to_string())
}

fn parse_beta(s: &str) -> Result<Vec<BetaKind>, String> {
    if s == "all" {
        return Ok(BetaKind::STANDARD.to_vec());
    }
    BetaKind::from_name(s).map(|k| vec![k]).ok_or_else(|| format!("unknown estimator {s:?} (mle, a, b, mr, mr_seq, all)"))
}

fn parse_delta(s: &str) -> Result<DeltaKind, String> {
    DeltaKind::from_name(s).ok_or_else(|| format!("unknown delta estimator {s:?} (gformula, ipw, aipw)"))
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_regime)]
    regime: Regime,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 200, conflicts_with = "paper_scale")]
    reps: usize,
    /// Run 1000 replications.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Propensity roles to stabilize: none, all, or a list of base,c1c0,mc1c0.
    #[arg(long, default_value = "none", value_parser = parse_flags)]
    stabilize: StabilizeFlags,
    /// Also run the sequential multiply-robust estimator.
    #[arg(long)]
    sequential: bool,
    #[arg(long, default_value = "pathfx-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Diff,
    Logrr,
}

#[derive(Clone, Copy, ValueEnum)]
enum BootArg {
    None,
    Nonparametric,
    Wild,
    WildUnit,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathwayArg {
    Linear,
    Discrete,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    /// TOML file with working models and options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated: mle, a, b, mr, mr_seq, or all.
    #[arg(long, default_value = "mr", value_delimiter = ',', value_parser = parse_beta)]
    estimator: Vec<Vec<BetaKind>>,
    /// Override the estimator of the baseline mean for every row.
    #[arg(long, value_parser = parse_delta)]
    delta: Option<DeltaKind>,
    #[arg(long)]
    comparison: u32,
    #[arg(long)]
    baseline: u32,
    /// Allow comparison == baseline, where every effect must vanish.
    #[arg(long)]
    identity_check: bool,
    #[arg(long, value_enum, default_value = "diff")]
    scale: ScaleArg,
    #[arg(long, value_enum, default_value = "none")]
    bootstrap: BootArg,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, value_enum)]
    pathway: Option<PathwayArg>,
    /// Propensity roles to stabilize [default: c1c0,mc1c0].
    #[arg(long, value_parser = parse_flags)]
    stabilize: Option<StabilizeFlags>,
    /// Skip CSV columns outside the c0_/e/c1_/m/y scheme.
    #[arg(long)]
    ignore_extra: bool,
    /// Print the resolved working models and exit.
    #[arg(long)]
    print_models: bool,
    #[arg(long, default_value = "pathfx-out")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 10_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct DrawArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn simulate(a: SimulateArgs, pool: &rayon::ThreadPool) -> Result<(), CliError> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage("--alpha must lie in (0, 1)".into()));
    }
    let spec = SimulationSpec {
        regime: a.regime,
        n: a.n,
        replications: if a.paper_scale { 1000 } else { a.reps },
        seed: a.seed,
        alpha: a.alpha,
        stabilize: a.stabilize,
        sequential: a.sequential,
    };
    let report = run::simulate(&spec, &a.out, pool)?;
    print!("{report}");
    Ok(())
}

fn estimate(a: EstimateArgs, pool: &rayon::ThreadPool) -> Result<(), CliError> {
    let file = a.config.as_deref().map(ConfigFile::load).transpose()?.unwrap_or_default();
    let data = io::read_dataset(&a.data, CsvOptions { ignore_extra: a.ignore_extra })?;
    let pathway = match (a.pathway, &file.pathway) {
        (Some(PathwayArg::Linear), _) => Pathway::Linear,
        (Some(PathwayArg::Discrete), _) => Pathway::Discrete,
        (None, Some(p)) => config::parse_pathway(p)?,
        (None, None) => Pathway::Linear,
    };
    let stabilize = match (a.stabilize, &file.stabilize) {
        (Some(f), _) => f,
        (None, Some(StabilizeValue::One(s))) => config::stabilize_from_str(s)?,
        (None, Some(StabilizeValue::Many(v))) => config::parse_stabilize(&v.iter().map(String::as_str).collect::<Vec<_>>())?,
        (None, None) => StabilizeFlags { base: false, c1c0: true, mc1c0: true },
    };
    let models = config::resolve_models(&file, config::default_models(pathway, data.d0(), data.d1()), data.d0(), data.d1())?;
    if a.print_models {
        print!("{}", config::render_models(&models));
        return Ok(());
    }
    let scale = match a.scale {
        ScaleArg::Diff => EffectScale::MeanDifference,
        ScaleArg::Logrr => EffectScale::LogRiskRatio,
    };
    let mut kinds: Vec<BetaKind> = a.estimator.into_iter().flatten().collect();
    kinds.dedup();
    let estimators = kinds
        .into_iter()
        .map(|b| EstimatorKind::new(b, a.delta.unwrap_or(b.default_delta())))
        .collect();
    let kind = match a.bootstrap {
        BootArg::None => None,
        BootArg::Nonparametric => Some(BootstrapKind::Nonparametric),
        BootArg::Wild => Some(BootstrapKind::Wild(WildWeights::Exp1)),
        BootArg::WildUnit => Some(BootstrapKind::Wild(WildWeights::Unit)),
    };
    let opts = EstimateOptions {
        pair: TreatmentPair::new(a.comparison, a.baseline),
        identity_check: a.identity_check,
        estimators,
        scale,
        config: EstimationConfig { models, pathway, stabilize },
        bootstrap: kind.map(|kind| BootstrapSpec { kind, replicates: a.reps, seed: a.seed, ci_level: a.ci_level }),
    };
    let rows = run::estimate(&data, &opts, pool)?;
    println!("pair {}  n = {}  scale {}  stabilize {}", opts.pair, rows[0].result.n_used, scale, config::stabilize_name(stabilize));
    println!("{}", report::estimates_table(&rows));
    let d = &rows[0].result.diagnostics;
    println!(
        "weights: max w'Mratio {}  ess {}  max w/C1ratio {}  ess {}  clipped {}",
        d.w_mratio.max,
        d.w_mratio.ess,
        d.w_c1ratio.max,
        d.w_c1ratio.ess,
        d.total_clipped()
    );
    run::write_estimate_outputs(&rows, &a.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run::thread_pool(cli.threads).and_then(|pool| match cli.command {
        Command::Simulate(a) => simulate(a, &pool),
        Command::Estimate(a) => estimate(a, &pool),
        Command::Oracle(a) => run::oracle(a.draws, a.seed, &pool).map(|r| println!("{r}")),
        Command::Draw(a) => run::draw(a.n, a.seed, &a.out).map(|d| eprintln!("wrote {} rows to {}", d.len(), a.out.display())),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
