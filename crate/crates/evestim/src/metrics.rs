//! Evaluation quantities aggregated over Monte-Carlo runs: event rate,
//! conditional innovation energy, MSE, relative MSE, and ANEES.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

// ============================================================================
// Per-run records
// ============================================================================

/// Everything one closed-loop run leaves behind for evaluation.
///
/// The trigger sequences (`gammas`, `zs`) always cover every step; `zs`
/// holds the sensor-side innovation, which exists whether or not the step
/// transmitted. The estimator sequences (`errors`, `covs`) are either empty
/// (a trigger-only run) or exactly as long as the trigger sequences.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub gammas: Vec<bool>,
    pub zs: Vec<DVector<f64>>,
    pub errors: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

impl RunRecord {
    pub fn new(
        seed: u64,
        gammas: Vec<bool>,
        zs: Vec<DVector<f64>>,
        errors: Vec<DVector<f64>>,
        covs: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::InvalidArgument("a run record needs at least one step".into()));
        }
        if zs.len() != gammas.len() {
            return Err(Error::InvalidArgument(format!(
                "{} innovations for {} trigger decisions",
                zs.len(),
                gammas.len()
            )));
        }
        if errors.len() != covs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} errors but {} covariances",
                errors.len(),
                covs.len()
            )));
        }
        if !errors.is_empty() && errors.len() != gammas.len() {
            return Err(Error::InvalidArgument(format!(
                "{} estimator steps for {} trigger steps",
                errors.len(),
                gammas.len()
            )));
        }
        Ok(RunRecord { seed, gammas, zs, errors, covs })
    }

    pub fn steps(&self) -> usize {
        self.gammas.len()
    }

    /// False for trigger-only runs that carry no estimator output.
    pub fn has_estimates(&self) -> bool {
        !self.errors.is_empty()
    }
}

fn require_estimates(records: &[RunRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no run records".into()));
    }
    if let Some(r) = records.iter().find(|r| !r.has_estimates()) {
        return Err(Error::InvalidArgument(format!(
            "run with seed {} carries no estimator output",
            r.seed
        )));
    }
    Ok(())
}

// ============================================================================
// Aggregates
// ============================================================================

/// Mean squared estimation error ‖x̂ − x‖² over every run and step.
pub fn mse(records: &[RunRecord]) -> Result<f64> {
    require_estimates(records)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for record in records {
        for e in &record.errors {
            sum += e.norm_squared();
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// MSE of `target` divided by MSE of `reference` (conventionally the
/// event-aware Kalman estimator on the same runs).
pub fn relative_mse(target: &[RunRecord], reference: &[RunRecord]) -> Result<f64> {
    if target.len() != reference.len()
        || target
            .iter()
            .zip(reference)
            .any(|(a, b)| a.steps() != b.steps())
    {
        return Err(Error::InvalidArgument(
            "relative MSE needs matching run and step counts".into(),
        ));
    }
    let denom = mse(reference)?;
    if denom == 0.0 {
        return Err(Error::Undefined("relative MSE against a zero-MSE reference".into()));
    }
    Ok(mse(target)? / denom)
}

/// Average normalized estimation error squared: mean of eᵀP⁻¹e over runs
/// and steps, divided by the state dimension. A consistent filter scores 1.
pub fn anees(records: &[RunRecord]) -> Result<f64> {
    require_estimates(records)?;
    let n_x = records[0].errors[0].len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (run, record) in records.iter().enumerate() {
        for (k, (e, p)) in record.errors.iter().zip(&record.covs).enumerate() {
            let chol = p.clone().cholesky().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "posterior covariance at run {run} (seed {}), step {k} is not invertible",
                    record.seed
                ))
            })?;
            sum += e.dot(&chol.solve(e));
            count += 1;
        }
    }
    Ok(sum / (count * n_x) as f64)
}

/// Fraction of steps that transmitted, over every run.
pub fn event_rate(records: &[RunRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no run records".into()));
    }
    let total: usize = records.iter().map(RunRecord::steps).sum();
    let events: usize = records
        .iter()
        .map(|r| r.gammas.iter().filter(|g| **g).count())
        .sum();
    Ok(events as f64 / total as f64)
}

/// Mean innovation energy zᵀz over exactly the silent steps.
pub fn conditional_z_energy(records: &[RunRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no run records".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for record in records {
        for (gamma, z) in record.gammas.iter().zip(&record.zs) {
            if !gamma {
                sum += z.norm_squared();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Undefined(
            "conditional innovation energy over zero silent steps".into(),
        ));
    }
    Ok(sum / count as f64)
}

// ============================================================================
// Sweep output row
// ============================================================================

/// One (β, α_z, estimator) cell of an estimator sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub beta: f64,
    pub alpha_z: f64,
    pub estimator: String,
    pub event_rate: f64,
    pub mse: f64,
    pub relative_mse: f64,
    pub anees: f64,
    pub mean_conditional_z_energy: f64,
    pub runs: usize,
    pub steps: usize,
    /// Cloud size used by the sampling estimator; echoes the resolved value
    /// on every row so reruns are unambiguous.
    pub samples: usize,
    pub seed: u64,
}

// ============================================================================
// Tests
// ============================================================================
