//! Closed-loop simulation and Monte-Carlo sweeps.
//!
//! One run wires plant → sensor-side trigger → channel → remote estimators.
//! The sensor owns a local Kalman filter (needed by the prediction-based
//! policy), decides transmissions, and the receiver mirrors the implicit
//! measurement with the same rule fed only by transmitted payloads. Every
//! estimator in a run consumes the same trajectory and the same transmission
//! sequence, so estimator comparisons are not confounded by channel noise.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{
    kf_predict, kf_update, sampling_update, SamplingConfig, SamplingState, SebkfState,
};
use crate::metrics::{self, RunRecord, SweepRow};
use crate::model::{sample_gaussian, simulate, GaussianBelief, LinearSystemModel};
use crate::rng::{self, Lane};
use crate::triggers::{PolicyKind, TriggerState, WeightingSpec};

// ============================================================================
// Defaults
// ============================================================================

/// Threshold grid covering the benchmark's six decades.
pub const DEFAULT_ALPHA_GRID: [f64; 24] = [
    0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 1.0, 2.0, 4.0, 5.0, 10.0, 20.0, 50.0, 100.0,
    200.0, 300.0, 500.0, 1000.0, 2000.0, 1e4, 5e4, 1e6,
];

/// Threshold grid for the estimator study. Stops at 1e4 (stochastic event
/// rate near 2%): below that, runs of 150 steps carry almost no events and
/// every sample-based estimate degrades into free-running prediction.
pub const DEFAULT_SWEEP_ALPHA_GRID: [f64; 22] = [
    0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 1.0, 2.0, 4.0, 5.0, 10.0, 20.0, 50.0, 100.0,
    200.0, 300.0, 500.0, 1000.0, 2000.0, 1e4,
];

/// Exponents plotted in the trigger-characterization study.
pub const DEFAULT_CHARACTERIZE_BETAS: [f64; 5] = [2.0, 3.0, 5.0, 10.0, 1000.0];

/// Exponents swept in the estimator study.
pub const DEFAULT_SWEEP_BETAS: [f64; 2] = [2.0, 1000.0];

pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_CHARACTERIZE_STEPS: usize = 500;
pub const DEFAULT_SWEEP_STEPS: usize = 150;
pub const DEFAULT_SEED: u64 = 42;

/// Default cloud size, and the larger size used automatically when the
/// measured event rate drops below `SMALL_RATE_THRESHOLD`.
pub const DEFAULT_SAMPLES: usize = 1000;
pub const LOW_RATE_SAMPLES: usize = 5000;
pub const SMALL_RATE_THRESHOLD: f64 = 0.1;

// ============================================================================
// Configuration
// ============================================================================

/// Remote estimators the harness can run side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Standard Kalman filter that receives every measurement, bypassing the
    /// trigger entirely; the full-communication baseline.
    PeriodicKf,
    /// Kalman filter processing implicit measurements with inflated noise.
    Sebkf,
    /// Rejection-sampling estimator.
    Sampling,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::PeriodicKf => "kf",
            EstimatorKind::Sebkf => "sebkf",
            EstimatorKind::Sampling => "sampling",
        }
    }

    fn lane(self) -> Lane {
        Lane::Estimator(match self {
            EstimatorKind::PeriodicKf => 0,
            EstimatorKind::Sebkf => 1,
            EstimatorKind::Sampling => 2,
        })
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kf" => Ok(EstimatorKind::PeriodicKf),
            "sebkf" => Ok(EstimatorKind::Sebkf),
            "sampling" => Ok(EstimatorKind::Sampling),
            other => Err(Error::InvalidArgument(format!(
                "unknown estimator '{other}' (expected kf, sebkf, or sampling)"
            ))),
        }
    }
}

/// Everything a Monte-Carlo experiment needs. One config spans a grid of
/// (β, α_z) scenario points; runs, steps, seeds, and the initial belief are
/// shared across the grid.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub model: LinearSystemModel,
    pub policy: PolicyKind,
    /// Evaluate the ellipsoid indicator instead of the smooth weighting.
    pub deterministic: bool,
    pub betas: Vec<f64>,
    pub alpha_zs: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub runs: usize,
    pub steps: usize,
    pub master_seed: u64,
    /// Cloud size N; `None` picks `DEFAULT_SAMPLES`, upgraded to
    /// `LOW_RATE_SAMPLES` at scenario points whose event rate falls below
    /// `SMALL_RATE_THRESHOLD`.
    pub samples: Option<usize>,
    pub reselections: usize,
    pub max_batches: usize,
    /// Leading steps dropped from every record.
    pub burn_in: usize,
    /// The true initial state is drawn from 𝒩(initial_mean, initial_cov),
    /// and initial_cov doubles as the estimators' P₀.
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
    /// When set (the default), estimators start at the sampled true state;
    /// otherwise they start at `initial_mean`.
    pub estimator_knows_x0: bool,
}

impl ScenarioConfig {
    /// The 2-D constant-velocity tracking benchmark with the
    /// prediction-based policy and desk-scale Monte-Carlo settings.
    pub fn benchmark() -> Self {
        let model = LinearSystemModel::constant_velocity_2d(0.3, 1.0)
            .expect("benchmark model parameters are valid");
        let nx = model.nx();
        ScenarioConfig {
            model,
            policy: PolicyKind::Sodp,
            deterministic: false,
            betas: vec![2.0],
            alpha_zs: vec![1.0],
            estimators: vec![
                EstimatorKind::PeriodicKf,
                EstimatorKind::Sebkf,
                EstimatorKind::Sampling,
            ],
            runs: DEFAULT_RUNS,
            steps: DEFAULT_CHARACTERIZE_STEPS,
            master_seed: DEFAULT_SEED,
            samples: None,
            reselections: 1,
            max_batches: 1000,
            burn_in: 0,
            initial_mean: DVector::zeros(nx),
            initial_cov: DMatrix::identity(nx, nx),
            estimator_knows_x0: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.burn_in >= self.steps {
            return Err(Error::InvalidArgument(format!(
                "burn-in of {} leaves no recorded steps out of {}",
                self.burn_in, self.steps
            )));
        }
        if self.betas.is_empty() || self.alpha_zs.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one beta and one alpha_z are required".into(),
            ));
        }
        for &b in &self.betas {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::InvalidArgument(format!("beta must be > 0, got {b}")));
            }
        }
        for &a in &self.alpha_zs {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidArgument(format!("alpha_z must be > 0, got {a}")));
            }
        }
        for (i, kind) in self.estimators.iter().enumerate() {
            if self.estimators[..i].contains(kind) {
                return Err(Error::InvalidArgument(format!(
                    "estimator '{}' listed twice",
                    kind.name()
                )));
            }
        }
        if let Some(n) = self.samples {
            if n < 2 {
                return Err(Error::InvalidArgument(format!(
                    "sample count must be at least 2, got {n}"
                )));
            }
        }
        if self.initial_mean.len() != self.model.nx() {
            return Err(Error::InvalidArgument(
                "initial mean dimension does not match the model".into(),
            ));
        }
        // Belief construction performs the covariance checks.
        GaussianBelief::new(self.initial_mean.clone(), self.initial_cov.clone())?;
        Ok(())
    }

    fn weighting(&self, beta: f64, alpha_z: f64) -> Result<WeightingSpec> {
        if self.deterministic {
            WeightingSpec::deterministic_isotropic(alpha_z, self.model.ny())
        } else {
            WeightingSpec::isotropic(beta, alpha_z, self.model.ny())
        }
    }

    fn sampling_config(&self, resolved_samples: usize) -> SamplingConfig {
        SamplingConfig {
            samples: resolved_samples,
            reselections: self.reselections,
            max_batches: self.max_batches,
        }
    }
}

// ============================================================================
// One closed-loop run
// ============================================================================

/// What crossed the channel in one run.
#[derive(Debug, Clone)]
pub struct ChannelLog {
    pub gammas: Vec<bool>,
    /// Scalars transmitted per step: 0 on silence, the measurement size plus
    /// (under the prediction-based policy) the local estimate mean on events.
    pub payload_sizes: Vec<usize>,
}

impl ChannelLog {
    pub fn total_transmissions(&self) -> usize {
        self.gammas.iter().filter(|g| **g).count()
    }
}

/// Result of one run: the trigger-only record (no estimator output) plus one
/// record per configured estimator, in configuration order.
#[derive(Debug)]
pub struct RunOutput {
    pub trigger: RunRecord,
    pub records: Vec<(EstimatorKind, RunRecord)>,
    pub channel: ChannelLog,
}

// At most three values exist per run, so the variant size spread is fine.
#[allow(clippy::large_enum_variant)]
enum EstState {
    Kf(GaussianBelief),
    Sebkf(SebkfState),
    Sampling(SamplingState, rand_chacha::ChaCha12Rng),
}

/// Simulates one run at one scenario point.
///
/// Per step: the sensor's local filter absorbs the measurement, both trigger
/// replicas advance their implicit measurement (asserted identical), the
/// sensor decides, and each estimator consumes the channel output. The
/// measurement is passed to the event-aware update without the implicit
/// value on transmissions, which makes that branch bit-identical to the
/// standard filter.
pub fn run_closed_loop(
    config: &ScenarioConfig,
    beta: f64,
    alpha_z: f64,
    sampling: &SamplingConfig,
    run_index: u64,
) -> Result<RunOutput> {
    run_closed_loop_inner(config, beta, alpha_z, sampling, run_index)
        .map_err(|e| e.at_point(beta, alpha_z))
}

fn run_closed_loop_inner(
    config: &ScenarioConfig,
    beta: f64,
    alpha_z: f64,
    sampling: &SamplingConfig,
    run_index: u64,
) -> Result<RunOutput> {
    let model = &config.model;
    let spec = config.weighting(beta, alpha_z)?;

    let mut traj_rng = rng::substream(config.master_seed, run_index, Lane::Trajectory);
    let x0 = sample_gaussian(&config.initial_mean, &config.initial_cov, &mut traj_rng)?;
    // One extra transition so measurements 1..=steps all exist.
    let traj = simulate(model, &x0, config.steps + 1, &mut traj_rng)?;
    let mut trigger_rng = rng::substream(config.master_seed, run_index, Lane::Trigger);

    let initial_mean = if config.estimator_knows_x0 {
        x0.clone()
    } else {
        config.initial_mean.clone()
    };
    let initial = GaussianBelief::new(initial_mean, config.initial_cov.clone())?;

    let mut sensor = TriggerState::new(config.policy, model, &initial)?;
    let mut receiver = TriggerState::new(config.policy, model, &initial)?;
    let mut local = initial.clone();

    let mut est_states: Vec<(EstimatorKind, EstState)> = config
        .estimators
        .iter()
        .map(|kind| {
            let state = match kind {
                EstimatorKind::PeriodicKf => EstState::Kf(initial.clone()),
                EstimatorKind::Sebkf => EstState::Sebkf(SebkfState::new(initial.clone())),
                EstimatorKind::Sampling => EstState::Sampling(
                    SamplingState::new(initial.clone()),
                    rng::substream(config.master_seed, run_index, kind.lane()),
                ),
            };
            (*kind, state)
        })
        .collect();

    let recorded = config.steps - config.burn_in;
    let mut gammas = Vec::with_capacity(recorded);
    let mut zs = Vec::with_capacity(recorded);
    let mut payload_sizes = Vec::with_capacity(recorded);
    let mut est_errors: Vec<Vec<DVector<f64>>> =
        vec![Vec::with_capacity(recorded); est_states.len()];
    let mut est_covs: Vec<Vec<DMatrix<f64>>> =
        vec![Vec::with_capacity(recorded); est_states.len()];

    for k in 1..=config.steps {
        let x_true = &traj.states[k];
        let y = &traj.measurements[k];

        // Sensor side: local filter first (its posterior may ship with the
        // payload), then the trigger decision.
        let local_post = if config.policy == PolicyKind::Sodp {
            let pred = kf_predict(&local, model);
            local = kf_update(&pred, model, y)?;
            Some(local.clone())
        } else {
            None
        };
        sensor.propagate_implicit(model);
        receiver.propagate_implicit(model);
        assert_eq!(
            sensor.c(),
            receiver.c(),
            "sensor and receiver implicit measurements diverged at step {k}"
        );
        let mut decision = sensor.decide(y, &spec, &mut trigger_rng);
        if let Some(payload) = decision.payload.as_mut() {
            payload.local_estimate = local_post.clone();
        }
        let gamma = decision.gamma;
        let c = receiver.c().clone();
        if let Some(payload) = &decision.payload {
            sensor.on_event(&payload.measurement, payload.local_estimate.as_ref())?;
            receiver.on_event(&payload.measurement, payload.local_estimate.as_ref())?;
        }

        // Remote estimators consume the identical channel output.
        for (i, (kind, state)) in est_states.iter_mut().enumerate() {
            let belief: &GaussianBelief = match state {
                EstState::Kf(belief) => {
                    let pred = kf_predict(belief, model);
                    *belief = kf_update(&pred, model, y)?;
                    belief
                }
                EstState::Sebkf(s) => {
                    let (y_arg, c_arg) = if gamma { (Some(y), None) } else { (None, Some(&c)) };
                    s.step(model, gamma, y_arg, c_arg, spec.shape_matrix())?;
                    &s.belief
                }
                EstState::Sampling(s, est_rng) => {
                    let (y_arg, c_arg) = if gamma { (Some(y), None) } else { (None, Some(&c)) };
                    *s = sampling_update(
                        s, model, gamma, y_arg, c_arg, &spec, sampling, est_rng,
                    )?;
                    &s.belief
                }
            };
            if k > config.burn_in {
                est_errors[i].push(&belief.mean - x_true);
                est_covs[i].push(belief.cov.clone());
            }
            let _ = kind;
        }

        if k > config.burn_in {
            gammas.push(gamma);
            zs.push(decision.z.clone());
            payload_sizes.push(decision.payload.as_ref().map_or(0, |p| {
                p.measurement.len()
                    + p.local_estimate.as_ref().map_or(0, |b| b.mean.len())
            }));
        }
    }

    let run_seed = rng::run_seed(config.master_seed, run_index);
    let trigger = RunRecord::new(run_seed, gammas.clone(), zs.clone(), vec![], vec![])?;
    let mut records = Vec::with_capacity(est_states.len());
    for (i, (kind, _)) in est_states.iter().enumerate() {
        records.push((
            *kind,
            RunRecord::new(
                run_seed,
                gammas.clone(),
                zs.clone(),
                std::mem::take(&mut est_errors[i]),
                std::mem::take(&mut est_covs[i]),
            )?,
        ));
    }
    let channel = ChannelLog { gammas, payload_sizes };
    Ok(RunOutput { trigger, records, channel })
}

// ============================================================================
// Monte-Carlo sweeps
// ============================================================================

/// One (β, α_z) cell of the trigger-characterization study.
#[derive(Debug, Clone)]
pub struct TriggerRow {
    pub beta: f64,
    pub alpha_z: f64,
    pub event_rate: f64,
    pub cond_z_energy: f64,
    pub runs: usize,
    pub steps: usize,
    pub seed: u64,
}

fn parallel_runs(
    config: &ScenarioConfig,
    beta: f64,
    alpha_z: f64,
    sampling: &SamplingConfig,
) -> Result<Vec<RunOutput>> {
    (0..config.runs as u64)
        .into_par_iter()
        .map(|run| run_closed_loop(config, beta, alpha_z, sampling, run))
        .collect()
}

/// Event rate and conditional innovation energy over the (β, α_z) grid,
/// with no estimators in the loop.
pub fn characterize_trigger(config: &ScenarioConfig) -> Result<Vec<TriggerRow>> {
    config.validate()?;
    let mut trigger_only = config.clone();
    trigger_only.estimators.clear();
    let sampling = config.sampling_config(config.samples.unwrap_or(DEFAULT_SAMPLES));
    let mut rows = Vec::with_capacity(config.betas.len() * config.alpha_zs.len());
    for &beta in &config.betas {
        for &alpha_z in &config.alpha_zs {
            let outputs = parallel_runs(&trigger_only, beta, alpha_z, &sampling)?;
            let records: Vec<RunRecord> = outputs.into_iter().map(|o| o.trigger).collect();
            rows.push(TriggerRow {
                beta,
                alpha_z,
                event_rate: metrics::event_rate(&records)
                    .map_err(|e| e.at_point(beta, alpha_z))?,
                cond_z_energy: metrics::conditional_z_energy(&records)
                    .map_err(|e| e.at_point(beta, alpha_z))?,
                runs: config.runs,
                steps: config.steps,
                seed: config.master_seed,
            });
        }
    }
    Ok(rows)
}

/// Measures the event rate of a scenario point without running estimators.
/// The trigger draws live on their own stream, so this rate is exactly the
/// rate the full run will see.
fn trigger_only_rate(config: &ScenarioConfig, beta: f64, alpha_z: f64) -> Result<f64> {
    let mut trigger_only = config.clone();
    trigger_only.estimators.clear();
    let sampling = config.sampling_config(DEFAULT_SAMPLES);
    let outputs = parallel_runs(&trigger_only, beta, alpha_z, &sampling)?;
    let records: Vec<RunRecord> = outputs.into_iter().map(|o| o.trigger).collect();
    metrics::event_rate(&records).map_err(|e| e.at_point(beta, alpha_z))
}

/// Estimation quality over the (β, α_z, estimator) grid.
///
/// The event-aware Kalman estimator is always run (appended when missing)
/// because relative MSE is defined against it. Row order is deterministic:
/// β outer, α_z middle, estimator (configuration order) inner.
pub fn sweep_estimators(config: &ScenarioConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if config.estimators.is_empty() {
        return Err(Error::InvalidArgument(
            "an estimator sweep needs at least one estimator".into(),
        ));
    }
    let mut cfg = config.clone();
    if !cfg.estimators.contains(&EstimatorKind::Sebkf) {
        cfg.estimators.push(EstimatorKind::Sebkf);
    }
    let wants_sampling = cfg.estimators.contains(&EstimatorKind::Sampling);
    let mut rows = Vec::new();
    for &beta in &cfg.betas {
        for &alpha_z in &cfg.alpha_zs {
            let resolved_samples = match cfg.samples {
                Some(n) => n,
                None if wants_sampling => {
                    if trigger_only_rate(&cfg, beta, alpha_z)? < SMALL_RATE_THRESHOLD {
                        LOW_RATE_SAMPLES
                    } else {
                        DEFAULT_SAMPLES
                    }
                }
                None => DEFAULT_SAMPLES,
            };
            let sampling = cfg.sampling_config(resolved_samples);
            let outputs = parallel_runs(&cfg, beta, alpha_z, &sampling)?;

            let mut trigger_records = Vec::with_capacity(outputs.len());
            let mut per_estimator: Vec<Vec<RunRecord>> =
                vec![Vec::with_capacity(outputs.len()); cfg.estimators.len()];
            for output in outputs {
                trigger_records.push(output.trigger);
                for (i, (_, record)) in output.records.into_iter().enumerate() {
                    per_estimator[i].push(record);
                }
            }
            let at = |e: Error| e.at_point(beta, alpha_z);
            let rate = metrics::event_rate(&trigger_records).map_err(at)?;
            let cond = metrics::conditional_z_energy(&trigger_records)
                .map_err(|e| e.at_point(beta, alpha_z))?;
            let reference_index = cfg
                .estimators
                .iter()
                .position(|k| *k == EstimatorKind::Sebkf)
                .expect("reference estimator was appended above");
            for (i, kind) in cfg.estimators.iter().enumerate() {
                let records = &per_estimator[i];
                rows.push(SweepRow {
                    beta,
                    alpha_z,
                    estimator: kind.name().to_string(),
                    event_rate: rate,
                    mse: metrics::mse(records).map_err(|e| e.at_point(beta, alpha_z))?,
                    relative_mse: metrics::relative_mse(records, &per_estimator[reference_index])
                        .map_err(|e| e.at_point(beta, alpha_z))?,
                    anees: metrics::anees(records).map_err(|e| e.at_point(beta, alpha_z))?,
                    mean_conditional_z_energy: cond,
                    runs: cfg.runs,
                    steps: cfg.steps,
                    samples: resolved_samples,
                    seed: cfg.master_seed,
                });
            }
        }
    }
    Ok(rows)
}

// ============================================================================
// Consistency boundary
// ============================================================================

/// Where a trigger's conditional innovation energy stops beating the β=2
/// reference.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryResult {
    pub alpha_z: f64,
    pub event_rate: f64,
    /// True when the target curve never exceeded the reference anywhere on
    /// the grid, so the returned point is simply the grid maximum.
    pub at_grid_maximum: bool,
}

/// Scans the characterization rows in ascending α_z and returns the last
/// grid point before the target exponent's conditional energy first exceeds
/// the β=2 curve, with that point's event rate (measured on the target
/// curve).
pub fn consistency_boundary(rows: &[TriggerRow], target_beta: f64) -> Result<BoundaryResult> {
    let mut reference: Vec<&TriggerRow> = rows.iter().filter(|r| r.beta == 2.0).collect();
    let mut target: Vec<&TriggerRow> = rows.iter().filter(|r| r.beta == target_beta).collect();
    if reference.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument(
            "boundary needs characterization rows for beta=2 and the target beta".into(),
        ));
    }
    reference.sort_by(|a, b| a.alpha_z.total_cmp(&b.alpha_z));
    target.sort_by(|a, b| a.alpha_z.total_cmp(&b.alpha_z));
    if reference.len() != target.len()
        || reference
            .iter()
            .zip(&target)
            .any(|(a, b)| a.alpha_z != b.alpha_z)
    {
        return Err(Error::InvalidArgument(
            "reference and target curves cover different alpha_z grids".into(),
        ));
    }
    let mut last_ok: Option<&TriggerRow> = None;
    for (reference_row, target_row) in reference.iter().zip(&target) {
        if target_row.cond_z_energy > reference_row.cond_z_energy {
            return match last_ok {
                Some(row) => Ok(BoundaryResult {
                    alpha_z: row.alpha_z,
                    event_rate: row.event_rate,
                    at_grid_maximum: false,
                }),
                None => Err(Error::Undefined(format!(
                    "beta={target_beta} already exceeds the reference at the smallest alpha_z"
                ))),
            };
        }
        last_ok = Some(target_row);
    }
    let row = last_ok.expect("non-empty grids checked above");
    Ok(BoundaryResult {
        alpha_z: row.alpha_z,
        event_rate: row.event_rate,
        at_grid_maximum: true,
    })
}

// ============================================================================
// Tests
// ============================================================================

#[cfg(test)]
mod tests {
    use super::*;

    fn small_benchmark() -> ScenarioConfig {
        let mut config = ScenarioConfig::benchmark();
        config.runs = 4;
        config.steps = 40;
        config.samples = Some(200);
        config
    }

    fn default_sampling(config: &ScenarioConfig) -> SamplingConfig {
        config.sampling_config(config.samples.unwrap_or(DEFAULT_SAMPLES))
    }

    #[test]
    fn validation_rejects_degenerate_configs() {
        let mut c = ScenarioConfig::benchmark();
        c.runs = 0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::benchmark();
        c.burn_in = c.steps;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::benchmark();
        c.alpha_zs = vec![-1.0];
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::benchmark();
        c.betas = vec![];
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::benchmark();
        c.estimators = vec![EstimatorKind::Sebkf, EstimatorKind::Sebkf];
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::benchmark();
        c.samples = Some(1);
        assert!(c.validate().is_err());
        assert!(ScenarioConfig::benchmark().validate().is_ok());
    }

    #[test]
    fn tiny_threshold_transmits_always_and_matches_the_periodic_filter() {
        let mut config = small_benchmark();
        config.deterministic = true;
        config.estimators = vec![EstimatorKind::PeriodicKf, EstimatorKind::Sebkf];
        let sampling = default_sampling(&config);
        let out = run_closed_loop(&config, 2.0, 1e-12, &sampling, 0).unwrap();
        assert!(out.trigger.gammas.iter().all(|g| *g));
        assert_eq!(out.channel.total_transmissions(), config.steps);
        let (_, kf) = &out.records[0];
        let (_, sebkf) = &out.records[1];
        for k in 0..kf.errors.len() {
            assert_eq!(kf.errors[k], sebkf.errors[k], "means diverged at step {k}");
            assert_eq!(kf.covs[k], sebkf.covs[k], "covariances diverged at step {k}");
        }
    }

    #[test]
    fn huge_threshold_never_transmits_and_grows_the_covariance() {
        let mut config = small_benchmark();
        config.estimators = vec![EstimatorKind::Sebkf];
        let sampling = default_sampling(&config);
        let out = run_closed_loop(&config, 2.0, 1e12, &sampling, 0).unwrap();
        assert!(out.trigger.gammas.iter().all(|g| !*g));
        assert_eq!(out.channel.total_transmissions(), 0);
        let (_, sebkf) = &out.records[0];
        let first = sebkf.covs.first().unwrap().trace();
        let last = sebkf.covs.last().unwrap().trace();
        assert!(last > first, "covariance should grow without measurements");
    }

    #[test]
    fn runs_are_deterministic_and_estimator_subset_invariant() {
        let config = small_benchmark();
        let sampling = default_sampling(&config);
        let a = run_closed_loop(&config, 2.0, 1.0, &sampling, 3).unwrap();
        let b = run_closed_loop(&config, 2.0, 1.0, &sampling, 3).unwrap();
        assert_eq!(a.trigger.gammas, b.trigger.gammas);
        for ((_, ra), (_, rb)) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.errors, rb.errors);
            assert_eq!(ra.covs, rb.covs);
        }
        // Dropping estimators must not change the channel or the survivors.
        let mut kf_only = config.clone();
        kf_only.estimators = vec![EstimatorKind::PeriodicKf];
        let c = run_closed_loop(&kf_only, 2.0, 1.0, &sampling, 3).unwrap();
        assert_eq!(a.trigger.gammas, c.trigger.gammas);
        assert_eq!(a.trigger.zs, c.trigger.zs);
        let kf_full = &a.records[0].1;
        let kf_alone = &c.records[0].1;
        assert_eq!(kf_full.errors, kf_alone.errors);
    }

    #[test]
    fn payload_sizes_follow_the_policy() {
        let config = small_benchmark();
        let sampling = default_sampling(&config);
        let out = run_closed_loop(&config, 2.0, 1.0, &sampling, 1).unwrap();
        let (ny, nx) = (config.model.ny(), config.model.nx());
        for (gamma, size) in out.channel.gammas.iter().zip(&out.channel.payload_sizes) {
            if *gamma {
                assert_eq!(*size, ny + nx, "prediction policy ships y and the local mean");
            } else {
                assert_eq!(*size, 0);
            }
        }
        assert!(out.channel.total_transmissions() > 0);
    }

    #[test]
    fn burn_in_trims_every_sequence() {
        let mut config = small_benchmark();
        config.burn_in = 15;
        let sampling = default_sampling(&config);
        let out = run_closed_loop(&config, 2.0, 1.0, &sampling, 0).unwrap();
        assert_eq!(out.trigger.steps(), config.steps - 15);
        for (_, record) in &out.records {
            assert_eq!(record.steps(), config.steps - 15);
            assert_eq!(record.errors.len(), config.steps - 15);
        }
    }

    #[test]
    fn characterization_matches_a_sequential_rerun() {
        let mut config = small_benchmark();
        config.estimators.clear();
        config.betas = vec![2.0];
        config.alpha_zs = vec![0.5, 5.0];
        let rows = characterize_trigger(&config).unwrap();
        assert_eq!(rows.len(), 2);
        let sampling = default_sampling(&config);
        for row in &rows {
            let mut records = Vec::new();
            for run in 0..config.runs as u64 {
                records.push(
                    run_closed_loop(&config, row.beta, row.alpha_z, &sampling, run)
                        .unwrap()
                        .trigger,
                );
            }
            assert_eq!(row.event_rate, metrics::event_rate(&records).unwrap());
            assert_eq!(
                row.cond_z_energy,
                metrics::conditional_z_energy(&records).unwrap()
            );
        }
        // Repeated invocation reproduces rows bit for bit.
        let again = characterize_trigger(&config).unwrap();
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(a.event_rate, b.event_rate);
            assert_eq!(a.cond_z_energy, b.cond_z_energy);
        }
    }

    #[test]
    fn sweep_emits_reference_rows_and_unit_relative_mse() {
        let mut config = small_benchmark();
        config.estimators = vec![EstimatorKind::PeriodicKf];
        config.betas = vec![2.0];
        config.alpha_zs = vec![1.0];
        config.steps = 30;
        let rows = sweep_estimators(&config).unwrap();
        // The reference estimator is appended even though only the periodic
        // filter was requested.
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().any(|r| r.estimator == "sebkf"));
        let sebkf = rows.iter().find(|r| r.estimator == "sebkf").unwrap();
        assert_eq!(sebkf.relative_mse, 1.0);
        assert_eq!(rows[0].event_rate, rows[1].event_rate);
        assert_eq!(rows[0].samples, 200);
        for row in &rows {
            assert!(row.event_rate > 0.0 && row.event_rate < 1.0);
            assert!(row.mse.is_finite() && row.anees.is_finite());
        }
    }

    #[test]
    fn starvation_carries_the_scenario_coordinates() {
        let mut config = small_benchmark();
        config.estimators = vec![EstimatorKind::Sampling];
        config.betas = vec![2.0];
        // At a moderate threshold silence is frequent but the per-batch
        // acceptance fraction stays below one, so a single-batch cap starves
        // on the first silent step.
        config.alpha_zs = vec![2.0];
        config.max_batches = 1;
        config.samples = Some(500);
        let err = sweep_estimators(&config).unwrap_err();
        assert!(err.is_starvation(), "expected starvation, got: {err}");
        let msg = err.to_string();
        assert!(msg.contains("alpha_z=2"), "{msg}");
    }

    #[test]
    fn boundary_scan_handles_all_three_outcomes() {
        let row = |beta: f64, alpha_z: f64, energy: f64, rate: f64| TriggerRow {
            beta,
            alpha_z,
            event_rate: rate,
            cond_z_energy: energy,
            runs: 1,
            steps: 1,
            seed: 0,
        };
        // Crossing between alpha 2 and alpha 3.
        let rows = vec![
            row(2.0, 1.0, 1.0, 0.9),
            row(2.0, 2.0, 2.0, 0.5),
            row(2.0, 3.0, 3.0, 0.2),
            row(1000.0, 1.0, 0.5, 0.8),
            row(1000.0, 2.0, 1.9, 0.4),
            row(1000.0, 3.0, 3.5, 0.1),
        ];
        let b = consistency_boundary(&rows, 1000.0).unwrap();
        assert_eq!(b.alpha_z, 2.0);
        assert_eq!(b.event_rate, 0.4);
        assert!(!b.at_grid_maximum);
        // A curve compared against itself never crosses.
        let b = consistency_boundary(&rows, 2.0).unwrap();
        assert_eq!(b.alpha_z, 3.0);
        assert!(b.at_grid_maximum);
        // Violation at the first grid point has no boundary.
        let rows = vec![
            row(2.0, 1.0, 1.0, 0.9),
            row(1000.0, 1.0, 2.0, 0.8),
        ];
        assert!(matches!(
            consistency_boundary(&rows, 1000.0),
            Err(Error::Undefined(_))
        ));
        // Mismatched grids are rejected.
        let rows = vec![row(2.0, 1.0, 1.0, 0.9), row(1000.0, 2.0, 0.5, 0.8)];
        assert!(consistency_boundary(&rows, 1000.0).is_err());
        assert!(consistency_boundary(&[], 1000.0).is_err());
    }

    #[test]
    fn sampling_estimator_streams_are_independent_of_the_trigger() {
        // Replacing the sampling estimator with none must leave the shared
        // gamma sequence untouched even at a point where sampling consumes
        // many draws.
        let mut with = small_benchmark();
        with.estimators = vec![EstimatorKind::Sampling];
        with.alpha_zs = vec![2.0];
        let sampling = default_sampling(&with);
        let mut without = with.clone();
        without.estimators.clear();
        let a = run_closed_loop(&with, 2.0, 2.0, &sampling, 7).unwrap();
        let b = run_closed_loop(&without, 2.0, 2.0, &sampling, 7).unwrap();
        assert_eq!(a.trigger.gammas, b.trigger.gammas);
        assert_eq!(a.trigger.zs, b.trigger.zs);
    }
}
