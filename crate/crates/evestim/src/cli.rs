//! Command-line front end.
//!
//! Three subcommands: `characterize` measures trigger behaviour over a
//! (β, α_z) grid, `sweep` compares remote estimators over the same kind of
//! grid, and `oracle-check` validates the filters against a numerical
//! integration reference on a scalar problem.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
//! 3 rejection-sampling starvation, 4 oracle mismatch (including a
//! quadrature grid that cannot hold the posterior).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{kf_predict, sampling_update, sebkf_update, SamplingConfig, SamplingState};
use crate::harness::{
    characterize_trigger, sweep_estimators, EstimatorKind, ScenarioConfig, TriggerRow,
    DEFAULT_ALPHA_GRID, DEFAULT_CHARACTERIZE_BETAS, DEFAULT_CHARACTERIZE_STEPS,
    DEFAULT_SWEEP_ALPHA_GRID, DEFAULT_SWEEP_BETAS, DEFAULT_SWEEP_STEPS,
};
use crate::metrics::SweepRow;
use crate::model::{GaussianBelief, LinearSystemModel};
use crate::oracle::{quadrature_posterior_no_event, GridSpec};
use crate::rng::{self, Lane};
use crate::triggers::{PolicyKind, WeightingSpec};

// ============================================================================
// Argument surface
// ============================================================================

#[derive(Parser)]
#[command(
    name = "evestim",
    version,
    about = "Event-triggered state estimation experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure event rate and conditional innovation energy over a grid.
    Characterize(CharacterizeArgs),
    /// Compare remote estimators (MSE, relative MSE, ANEES) over a grid.
    Sweep(SweepArgs),
    /// Check the filters against a quadrature reference on a scalar problem.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct CharacterizeArgs {
    /// Configuration file (key = value lines) applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weighting exponents, comma separated.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Thresholds alpha_z, comma separated.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Implicit-measurement policy: zero, sod, or sodp.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Leading steps excluded from the statistics.
    #[arg(long)]
    burn_in: Option<usize>,
    /// CSV output path (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Configuration file (key = value lines) applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weighting exponents, comma separated.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Thresholds alpha_z, comma separated.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Implicit-measurement policy: zero, sod, or sodp.
    #[arg(long)]
    policy: Option<String>,
    /// Estimators to run, comma separated: kf, sebkf, sampling.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cloud size N (defaults to an event-rate driven choice).
    #[arg(long)]
    samples: Option<usize>,
    /// Subset reselections M in the cloud down-selection.
    #[arg(long)]
    mselect: Option<usize>,
    /// Leading steps excluded from the statistics.
    #[arg(long)]
    burn_in: Option<usize>,
    /// CSV output path (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Cloud size for the sampling comparison.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Quadrature grid half-width in prior standard deviations.
    #[arg(long, default_value_t = 8.0)]
    grid_span: f64,
    /// Quadrature grid points per axis.
    #[arg(long, default_value_t = 1025)]
    grid_points: usize,
}

// ============================================================================
// Entry point
// ============================================================================

/// Parses arguments, runs the selected subcommand, and returns the process
/// exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Characterize(args) => run_characterize(args),
        Command::Sweep(args) => run_sweep(args),
        Command::OracleCheck(args) => run_oracle_check(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::AtScenarioPoint { source, .. } => exit_code(source),
        Error::Io(_) => 2,
        Error::SamplingStarvation { .. } => 3,
        Error::OracleMismatch(_) | Error::GridTooSmall { .. } => 4,
        _ => 1,
    }
}

// ============================================================================
// Configuration files
// ============================================================================

/// Settings that a configuration file may provide. Flags override these,
/// and these override the built-in defaults.
#[derive(Debug, Default)]
struct FileSettings {
    beta: Option<Vec<f64>>,
    alpha: Option<Vec<f64>>,
    policy: Option<String>,
    estimators: Option<Vec<String>>,
    runs: Option<usize>,
    steps: Option<usize>,
    seed: Option<u64>,
    samples: Option<usize>,
    mselect: Option<usize>,
    burn_in: Option<usize>,
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|item| {
            item.trim().parse::<T>().map_err(|_| {
                Error::InvalidArgument(format!(
                    "config line {line}: cannot parse '{}' for key '{key}'",
                    item.trim()
                ))
            })
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| {
        Error::InvalidArgument(format!(
            "config line {line}: cannot parse '{}' for key '{key}'",
            value.trim()
        ))
    })
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped,
/// `[section]` headers are ignored, unknown keys are errors. Key names may
/// use either hyphens or underscores.
fn parse_config_file(text: &str) -> Result<FileSettings> {
    let mut settings = FileSettings::default();
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidArgument(format!(
                "config line {line_no}: expected 'key = value', got '{line}'"
            )));
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "beta" => settings.beta = Some(parse_list(value, line_no, "beta")?),
            "alpha" => settings.alpha = Some(parse_list(value, line_no, "alpha")?),
            "policy" => settings.policy = Some(value.to_string()),
            "estimators" => {
                settings.estimators =
                    Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "runs" => settings.runs = Some(parse_scalar(value, line_no, "runs")?),
            "steps" => settings.steps = Some(parse_scalar(value, line_no, "steps")?),
            "seed" => settings.seed = Some(parse_scalar(value, line_no, "seed")?),
            "samples" => settings.samples = Some(parse_scalar(value, line_no, "samples")?),
            "mselect" => settings.mselect = Some(parse_scalar(value, line_no, "mselect")?),
            "burn-in" => settings.burn_in = Some(parse_scalar(value, line_no, "burn-in")?),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "config line {line_no}: unknown key '{other}'"
                )));
            }
        }
    }
    Ok(settings)
}

fn load_config_file(path: &Path) -> Result<FileSettings> {
    let text = std::fs::read_to_string(path)?;
    parse_config_file(&text)
}

fn parse_estimators(names: &[String]) -> Result<Vec<EstimatorKind>> {
    names.iter().map(|name| name.trim().parse()).collect()
}

fn parse_policy(name: &str) -> Result<PolicyKind> {
    name.trim().parse()
}

// ============================================================================
// Subcommands
// ============================================================================

fn run_characterize(args: CharacterizeArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => load_config_file(path)?,
        None => FileSettings::default(),
    };
    let mut config = ScenarioConfig::benchmark();
    config.betas = DEFAULT_CHARACTERIZE_BETAS.to_vec();
    config.alpha_zs = DEFAULT_ALPHA_GRID.to_vec();
    config.steps = DEFAULT_CHARACTERIZE_STEPS;
    config.estimators.clear();

    if let Some(beta) = file.beta {
        config.betas = beta;
    }
    if let Some(alpha) = file.alpha {
        config.alpha_zs = alpha;
    }
    if let Some(policy) = &file.policy {
        config.policy = parse_policy(policy)?;
    }
    if let Some(runs) = file.runs {
        config.runs = runs;
    }
    if let Some(steps) = file.steps {
        config.steps = steps;
    }
    if let Some(seed) = file.seed {
        config.master_seed = seed;
    }
    if let Some(burn_in) = file.burn_in {
        config.burn_in = burn_in;
    }

    if let Some(beta) = args.beta {
        config.betas = beta;
    }
    if let Some(alpha) = args.alpha {
        config.alpha_zs = alpha;
    }
    if let Some(policy) = &args.policy {
        config.policy = parse_policy(policy)?;
    }
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(burn_in) = args.burn_in {
        config.burn_in = burn_in;
    }

    let rows = characterize_trigger(&config)?;
    with_output(args.out.as_deref(), |w| write_characterize_csv(&rows, w))
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => load_config_file(path)?,
        None => FileSettings::default(),
    };
    let mut config = ScenarioConfig::benchmark();
    config.betas = DEFAULT_SWEEP_BETAS.to_vec();
    config.alpha_zs = DEFAULT_SWEEP_ALPHA_GRID.to_vec();
    config.steps = DEFAULT_SWEEP_STEPS;

    if let Some(beta) = file.beta {
        config.betas = beta;
    }
    if let Some(alpha) = file.alpha {
        config.alpha_zs = alpha;
    }
    if let Some(policy) = &file.policy {
        config.policy = parse_policy(policy)?;
    }
    if let Some(estimators) = &file.estimators {
        config.estimators = parse_estimators(estimators)?;
    }
    if let Some(runs) = file.runs {
        config.runs = runs;
    }
    if let Some(steps) = file.steps {
        config.steps = steps;
    }
    if let Some(seed) = file.seed {
        config.master_seed = seed;
    }
    if let Some(samples) = file.samples {
        config.samples = Some(samples);
    }
    if let Some(mselect) = file.mselect {
        config.reselections = mselect;
    }
    if let Some(burn_in) = file.burn_in {
        config.burn_in = burn_in;
    }

    if let Some(beta) = args.beta {
        config.betas = beta;
    }
    if let Some(alpha) = args.alpha {
        config.alpha_zs = alpha;
    }
    if let Some(policy) = &args.policy {
        config.policy = parse_policy(policy)?;
    }
    if let Some(estimators) = &args.estimators {
        config.estimators = parse_estimators(estimators)?;
    }
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(samples) = args.samples {
        config.samples = Some(samples);
    }
    if let Some(mselect) = args.mselect {
        config.reselections = mselect;
    }
    if let Some(burn_in) = args.burn_in {
        config.burn_in = burn_in;
    }

    let rows = sweep_estimators(&config)?;
    with_output(args.out.as_deref(), |w| write_sweep_csv(&rows, w))
}

// ============================================================================
// CSV output
// ============================================================================

/// Nine significant digits, enough to reproduce every plotted quantity and
/// to make rerun outputs byte-comparable.
fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

fn with_output<F>(path: Option<&Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            write(&mut file)?;
            file.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)
        }
    }
}

fn write_characterize_csv(rows: &[TriggerRow], out: &mut dyn Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["beta", "alpha_z", "event_rate", "cond_z_energy", "runs", "steps", "seed"])?;
    for row in rows {
        writer.write_record([
            fmt9(row.beta),
            fmt9(row.alpha_z),
            fmt9(row.event_rate),
            fmt9(row.cond_z_energy),
            row.runs.to_string(),
            row.steps.to_string(),
            row.seed.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn write_sweep_csv(rows: &[SweepRow], out: &mut dyn Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "beta",
        "alpha_z",
        "estimator",
        "event_rate",
        "mse",
        "relative_mse",
        "anees",
        "N",
        "runs",
        "steps",
        "seed",
    ])?;
    for row in rows {
        writer.write_record([
            fmt9(row.beta),
            fmt9(row.alpha_z),
            row.estimator.clone(),
            fmt9(row.event_rate),
            fmt9(row.mse),
            fmt9(row.relative_mse),
            fmt9(row.anees),
            row.samples.to_string(),
            row.runs.to_string(),
            row.steps.to_string(),
            row.seed.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

// ============================================================================
// Oracle check
// ============================================================================

/// Compares the closed-form filters and the sampler against numerical
/// integration on a scalar steady-state problem with a silent step.
fn run_oracle_check(args: OracleArgs) -> Result<()> {
    let seed = args.seed.unwrap_or(crate::harness::DEFAULT_SEED);
    let model = LinearSystemModel::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
    )?;
    // Off-centre posterior relative to the implicit value, so the silent
    // update moves the mean and the check is not trivially symmetric. The
    // quadrature and the closed-form filter update the predicted belief; the
    // sampler owns its prediction, so it starts one step earlier.
    let posterior = GaussianBelief::new(
        DVector::from_element(1, 0.3),
        DMatrix::identity(1, 1),
    )?;
    let predicted = kf_predict(&posterior, &model);
    let c = DVector::from_element(1, 0.0);
    let grid = GridSpec::for_problem(&predicted, &model, args.grid_points, args.grid_span)?;

    let spec2 = WeightingSpec::isotropic(2.0, 1.0, 1)?;
    let (q_mean, q_cov) = quadrature_posterior_no_event(&predicted, &model, &c, &spec2, &grid)?;
    let filtered = sebkf_update(&predicted, &model, false, None, Some(&c), spec2.shape_matrix())?;
    let filter_disc = (q_mean[0] - filtered.mean[0])
        .abs()
        .max((q_cov[(0, 0)] - filtered.cov[(0, 0)]).abs());
    println!("quadrature vs event-aware filter (beta=2): max discrepancy {filter_disc:.3e}");
    if filter_disc >= 1e-3 {
        return Err(Error::OracleMismatch(format!(
            "event-aware filter disagrees with quadrature by {filter_disc:.3e} (limit 1e-3)"
        )));
    }

    let sampling = SamplingConfig {
        samples: args.samples,
        ..SamplingConfig::default()
    };
    for (i, beta) in [2.0, 10.0, 1000.0].into_iter().enumerate() {
        let spec = WeightingSpec::isotropic(beta, 1.0, 1)?;
        let (q_mean, q_cov) = quadrature_posterior_no_event(&predicted, &model, &c, &spec, &grid)?;
        let mut rng = rng::substream(seed, i as u64, Lane::Estimator(2));
        let state = SamplingState::new(posterior.clone());
        let updated = sampling_update(
            &state,
            &model,
            false,
            None,
            Some(&c),
            &spec,
            &sampling,
            &mut rng,
        )?;
        let sampling_disc = (q_mean[0] - updated.belief.mean[0])
            .abs()
            .max((q_cov[(0, 0)] - updated.belief.cov[(0, 0)]).abs());
        println!(
            "quadrature vs sampling (beta={beta}, N={}): max discrepancy {sampling_disc:.3e}",
            args.samples
        );
        if sampling_disc >= 0.05 {
            return Err(Error::OracleMismatch(format!(
                "sampling estimator disagrees with quadrature at beta={beta} by {sampling_disc:.3e} (limit 5e-2)"
            )));
        }
    }
    println!("oracle check passed");
    Ok(())
}

// ============================================================================
// Tests
// ============================================================================
