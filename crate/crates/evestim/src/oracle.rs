//! Brute-force quadrature reference for one silent step, plus the
//! chi-square confidence band used by the consistency checks.
//!
//! The posterior after observing "no transmission" is proportional to
//! w(x)·p(x | history), where w(x) = ∫ φ(y − c)·𝒩(y; Hx, R) dy marginalizes
//! the unseen measurement against the trigger weighting. This module
//! evaluates that density on a dense grid with trapezoidal sums. It is
//! deliberately limited to one or two state dimensions and a scalar
//! measurement; the cost of a grid explodes beyond that, and the reference
//! is only needed on small systems.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{GaussianBelief, LinearSystemModel};
use crate::triggers::WeightingSpec;

pub const DEFAULT_POINTS_PER_AXIS: usize = 1025;
pub const DEFAULT_SPAN_SIGMAS: f64 = 8.0;

/// Density ratio at the grid boundary above which the grid is declared too
/// small to hold the posterior mass.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-8;

// ============================================================================
// Grids
// ============================================================================

/// One uniform quadrature axis.
#[derive(Debug, Clone, Copy)]
pub struct GridAxis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(lower: f64, upper: f64, points: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::InvalidArgument(format!(
                "grid axis needs finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        if points < 64 {
            return Err(Error::InvalidArgument(format!(
                "grid axis needs at least 64 points, got {points}"
            )));
        }
        Ok(GridAxis { lower, upper, points })
    }

    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    pub fn coordinates(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|i| self.lower + h * i as f64).collect()
    }

    /// Trapezoid weight of point `i`: step·(½ at the ends, 1 inside).
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.step();
        if i == 0 || i + 1 == self.points {
            0.5 * h
        } else {
            h
        }
    }
}

/// State-space and measurement-space quadrature grids.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub state: Vec<GridAxis>,
    pub measurement: GridAxis,
}

impl GridSpec {
    /// Sizes a grid for a concrete problem: each state axis spans the prior
    /// mean ± `span_sigmas` prior standard deviations, and the measurement
    /// axis covers every reachable Hx with the same margin in measurement
    /// noise standard deviations.
    pub fn for_problem(
        prior: &GaussianBelief,
        model: &LinearSystemModel,
        points_per_axis: usize,
        span_sigmas: f64,
    ) -> Result<Self> {
        if !(span_sigmas.is_finite() && span_sigmas > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid span must be positive, got {span_sigmas}"
            )));
        }
        check_scope(prior, model)?;
        let mut state = Vec::with_capacity(model.nx());
        for i in 0..model.nx() {
            let sd = prior.cov[(i, i)].sqrt().max(1e-9);
            state.push(GridAxis::new(
                prior.mean[i] - span_sigmas * sd,
                prior.mean[i] + span_sigmas * sd,
                points_per_axis,
            )?);
        }
        let (t_min, t_max) = reachable_t_range(model, &state);
        let r_sd = model.r()[(0, 0)].sqrt().max(1e-9);
        let measurement = GridAxis::new(
            t_min - span_sigmas * r_sd,
            t_max + span_sigmas * r_sd,
            points_per_axis,
        )?;
        Ok(GridSpec { state, measurement })
    }
}

fn check_scope(prior: &GaussianBelief, model: &LinearSystemModel) -> Result<()> {
    if model.nx() > 2 {
        return Err(Error::InvalidArgument(format!(
            "the quadrature reference handles at most 2 state dimensions, got {}",
            model.nx()
        )));
    }
    if model.ny() != 1 {
        return Err(Error::InvalidArgument(format!(
            "the quadrature reference handles scalar measurements only, got {}",
            model.ny()
        )));
    }
    if prior.dim() != model.nx() {
        return Err(Error::InvalidArgument("prior dimension does not match the model".into()));
    }
    Ok(())
}

/// Interval range of t = Hx over the state box.
fn reachable_t_range(model: &LinearSystemModel, state: &[GridAxis]) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (i, axis) in state.iter().enumerate() {
        let h = model.h()[(0, i)];
        let (a, b) = (h * axis.lower, h * axis.upper);
        lo += a.min(b);
        hi += a.max(b);
    }
    (lo, hi)
}

// ============================================================================
// Posterior by quadrature
// ============================================================================

/// The no-transmission weight w(t) = ∫ φ(y − c)·𝒩(y; t, R) dy evaluated by
/// trapezoid on the measurement axis, as a function of t = Hx.
pub(crate) fn no_event_weight(
    t: f64,
    phi_at: &[f64],
    y_coords: &[f64],
    y_axis: &GridAxis,
    r: f64,
) -> f64 {
    let norm = 1.0 / (2.0 * std::f64::consts::PI * r).sqrt();
    let mut acc = 0.0;
    for (j, (&y, &phi)) in y_coords.iter().zip(phi_at).enumerate() {
        let d = y - t;
        acc += y_axis.weight(j) * phi * norm * (-0.5 * d * d / r).exp();
    }
    acc
}

/// Posterior mean and covariance after one silent step, by grid quadrature.
///
/// `prior` must already be the predicted belief; only the conditioning on
/// silence happens here. Scalar-state and axis-aligned measurement rows reuse
/// one weight evaluation per distinct t; a general 1×2 row pays the full
/// double loop, so keep grids modest in that case.
pub fn quadrature_posterior_no_event(
    prior: &GaussianBelief,
    model: &LinearSystemModel,
    c: &DVector<f64>,
    spec: &WeightingSpec,
    grid: &GridSpec,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_scope(prior, model)?;
    if c.len() != 1 || spec.dim() != 1 {
        return Err(Error::InvalidArgument(
            "implicit measurement and weighting must be scalar here".into(),
        ));
    }
    if grid.state.len() != model.nx() {
        return Err(Error::InvalidArgument(format!(
            "grid has {} state axes, model has {} state dimensions",
            grid.state.len(),
            model.nx()
        )));
    }
    let r = model.r()[(0, 0)];
    if r <= 0.0 {
        return Err(Error::InvalidArgument(
            "the quadrature reference needs strictly positive measurement noise".into(),
        ));
    }

    // The measurement axis must keep the Gaussian factor's tails below the
    // boundary-mass limit for every reachable t, otherwise w is truncated.
    let (t_min, t_max) = reachable_t_range(model, &grid.state);
    let margin = (t_min - grid.measurement.lower).min(grid.measurement.upper - t_max);
    let tail_ratio = if margin <= 0.0 { 1.0 } else { (-0.5 * margin * margin / r).exp() };
    if tail_ratio >= BOUNDARY_MASS_LIMIT {
        return Err(Error::GridTooSmall { ratio: tail_ratio, limit: BOUNDARY_MASS_LIMIT });
    }

    // φ on the measurement axis once; it does not depend on t.
    let y_coords = grid.measurement.coordinates();
    let phi_at: Vec<f64> = y_coords
        .iter()
        .map(|&y| {
            let d = y - c[0];
            spec.phi_of_quadform(d * d / spec.shape_matrix()[(0, 0)])
        })
        .collect();
    let weight =
        |t: f64| no_event_weight(t, &phi_at, &y_coords, &grid.measurement, r);

    let prior_chol = prior
        .cov
        .clone()
        .cholesky()
        .ok_or(Error::NotCovariance { what: "quadrature prior covariance" })?;
    let log_norm = -0.5
        * (model.nx() as f64 * (2.0 * std::f64::consts::PI).ln()
            + prior_chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0);
    let prior_density = |x: &DVector<f64>| -> f64 {
        let d = x - &prior.mean;
        let u = prior_chol.l().solve_lower_triangular(&d).expect("positive diagonal");
        (log_norm - 0.5 * u.norm_squared()).exp()
    };

    match model.nx() {
        1 => {
            let axis = grid.state[0];
            let xs = axis.coordinates();
            let h00 = model.h()[(0, 0)];
            let density: Vec<f64> = xs
                .iter()
                .map(|&x| weight(h00 * x) * prior_density(&DVector::from_element(1, x)))
                .collect();
            check_boundary_1d(&density)?;
            let mut mass = 0.0;
            let mut mean = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let w = axis.weight(i) * density[i];
                mass += w;
                mean += w * x;
            }
            mean /= mass;
            let mut var = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                var += axis.weight(i) * density[i] * (x - mean) * (x - mean);
            }
            var /= mass;
            Ok((DVector::from_element(1, mean), DMatrix::from_element(1, 1, var)))
        }
        2 => {
            let (ax0, ax1) = (grid.state[0], grid.state[1]);
            let (xs0, xs1) = (ax0.coordinates(), ax1.coordinates());
            let (h0, h1) = (model.h()[(0, 0)], model.h()[(0, 1)]);
            // One weight evaluation per distinct t when H touches a single
            // state component.
            let mut density = DMatrix::zeros(ax0.points, ax1.points);
            if h1 == 0.0 {
                let w0: Vec<f64> = xs0.iter().map(|&x| weight(h0 * x)).collect();
                for (i, &x0) in xs0.iter().enumerate() {
                    for (j, &x1) in xs1.iter().enumerate() {
                        density[(i, j)] =
                            w0[i] * prior_density(&DVector::from_vec(vec![x0, x1]));
                    }
                }
            } else if h0 == 0.0 {
                let w1: Vec<f64> = xs1.iter().map(|&x| weight(h1 * x)).collect();
                for (i, &x0) in xs0.iter().enumerate() {
                    for (j, &x1) in xs1.iter().enumerate() {
                        density[(i, j)] =
                            w1[j] * prior_density(&DVector::from_vec(vec![x0, x1]));
                    }
                }
            } else {
                for (i, &x0) in xs0.iter().enumerate() {
                    for (j, &x1) in xs1.iter().enumerate() {
                        density[(i, j)] = weight(h0 * x0 + h1 * x1)
                            * prior_density(&DVector::from_vec(vec![x0, x1]));
                    }
                }
            }
            check_boundary_2d(&density)?;
            let mut mass = 0.0;
            let mut mean = DVector::zeros(2);
            for i in 0..ax0.points {
                for j in 0..ax1.points {
                    let w = ax0.weight(i) * ax1.weight(j) * density[(i, j)];
                    mass += w;
                    mean[0] += w * xs0[i];
                    mean[1] += w * xs1[j];
                }
            }
            mean /= mass;
            let mut cov = DMatrix::zeros(2, 2);
            for i in 0..ax0.points {
                for j in 0..ax1.points {
                    let w = ax0.weight(i) * ax1.weight(j) * density[(i, j)];
                    let d0 = xs0[i] - mean[0];
                    let d1 = xs1[j] - mean[1];
                    cov[(0, 0)] += w * d0 * d0;
                    cov[(0, 1)] += w * d0 * d1;
                    cov[(1, 1)] += w * d1 * d1;
                }
            }
            cov /= mass;
            cov[(1, 0)] = cov[(0, 1)];
            linalg::symmetrize_in_place(&mut cov);
            Ok((mean, cov))
        }
        _ => unreachable!("scope checked above"),
    }
}

fn check_boundary_1d(density: &[f64]) -> Result<()> {
    let peak = density.iter().cloned().fold(0.0f64, f64::max);
    let edge = density[0].max(*density.last().expect("non-empty axis"));
    boundary_verdict(edge, peak)
}

fn check_boundary_2d(density: &DMatrix<f64>) -> Result<()> {
    let peak = density.amax();
    let (n0, n1) = (density.nrows(), density.ncols());
    let mut edge = 0.0f64;
    for i in 0..n0 {
        edge = edge.max(density[(i, 0)]).max(density[(i, n1 - 1)]);
    }
    for j in 0..n1 {
        edge = edge.max(density[(0, j)]).max(density[(n0 - 1, j)]);
    }
    boundary_verdict(edge, peak)
}

fn boundary_verdict(edge: f64, peak: f64) -> Result<()> {
    if peak <= 0.0 {
        return Err(Error::GridTooSmall { ratio: 1.0, limit: BOUNDARY_MASS_LIMIT });
    }
    let ratio = edge / peak;
    if ratio >= BOUNDARY_MASS_LIMIT {
        return Err(Error::GridTooSmall { ratio, limit: BOUNDARY_MASS_LIMIT });
    }
    Ok(())
}

// ============================================================================
// Chi-square confidence band
// ============================================================================

/// Two-sided confidence interval for the average normalized estimation error
/// squared of a consistent estimator over `runs`·`steps` vectors of dimension
/// `n_x`: the sum is chi-square with runs·steps·n_x degrees of freedom, and
/// the band is that quantile pair divided by the degrees of freedom.
pub fn chi2_anees_bounds(
    runs: usize,
    steps: usize,
    n_x: usize,
    confidence: f64,
) -> Result<(f64, f64)> {
    let df = runs * steps * n_x;
    if df < 30 {
        return Err(Error::InvalidArgument(format!(
            "chi-square band needs at least 30 degrees of freedom, got {df}"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let dist = ChiSquared::new(df as f64)
        .map_err(|e| Error::InvalidArgument(format!("chi-square setup failed: {e}")))?;
    let alpha = 1.0 - confidence;
    let low = dist.inverse_cdf(alpha / 2.0) / df as f64;
    let high = dist.inverse_cdf(1.0 - alpha / 2.0) / df as f64;
    Ok((low, high))
}

// ============================================================================
// Tests
// ============================================================================
