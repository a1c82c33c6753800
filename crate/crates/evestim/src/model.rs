//! Discrete-time linear Gaussian state-space model, beliefs, and ground-truth
//! simulation, plus the 2D constant-velocity benchmark instantiation.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance for symmetry and semidefiniteness checks on covariances.
const COV_CHECK_TOL: f64 = 1e-10;

// ============================================================================
// Model
// ============================================================================

/// x_{k+1} = F·x_k + w_k,  y_k = H·x_k + v_k,  w ~ N(0, Q), v ~ N(0, R).
///
/// Immutable after construction; dimensions and covariance validity are
/// checked once in [`LinearSystemModel::new`].
#[derive(Debug, Clone)]
pub struct LinearSystemModel {
    f: DMatrix<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LinearSystemModel {
    /// Validates dimensions and covariances.
    ///
    /// Q and R must be symmetric and numerically positive semidefinite
    /// (relative tolerance 1e-10). R is positive definite in every realistic
    /// scenario, but semidefinite R is accepted so noise-free test systems
    /// can be built; downstream updates report an error if an innovation
    /// covariance fails to factorize. Detectability of (F, H) is the
    /// caller's responsibility — the constructor only logs a warning.
    pub fn new(
        f: DMatrix<f64>,
        h: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let nx = f.nrows();
        if f.ncols() != nx || nx == 0 {
            return Err(Error::InvalidArgument(format!(
                "F must be square and nonempty, got {}x{}",
                f.nrows(),
                f.ncols()
            )));
        }
        let ny = h.nrows();
        if h.ncols() != nx || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "H must be {ny}x{nx} with at least one row, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        check_covariance(&q, (nx, nx), "Q")?;
        check_covariance(&r, (ny, ny), "R")?;
        warn_if_undetectable(&f, &h);
        Ok(LinearSystemModel { f, h, q, r })
    }

    /// The 2D nearly-constant-velocity benchmark: state (x, ẋ, y, ẏ),
    /// position-only measurements, block-diagonal white-acceleration process
    /// noise scaled by `q`, and unit measurement noise.
    ///
    /// `delta` is the sampling interval and `q` the noise power scale; both
    /// must be strictly positive.
    pub fn constant_velocity_2d(delta: f64, q: f64) -> Result<Self> {
        if delta <= 0.0 || q <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "constant_velocity_2d requires delta > 0 and q > 0, got delta={delta}, q={q}"
            )));
        }
        let d = delta;
        let f = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, d, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, d, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        let (a, b, c) = (d * d * d / 3.0, d * d / 2.0, d);
        let qm = DMatrix::from_row_slice(
            4,
            4,
            &[
                a, b, 0.0, 0.0, //
                b, c, 0.0, 0.0, //
                0.0, 0.0, a, b, //
                0.0, 0.0, b, c,
            ],
        ) * q;
        let h = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let r = DMatrix::identity(2, 2);
        Self::new(f, h, qm, r)
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn nx(&self) -> usize {
        self.f.nrows()
    }

    pub fn ny(&self) -> usize {
        self.h.nrows()
    }

    /// Fixed point M of the one-step prediction Riccati map
    /// M ← F(M − M Hᵀ(H M Hᵀ + R)⁻¹ H M)Fᵀ + Q,
    /// iterated from M = Q until the relative change drops below 1e-12
    /// (capped at 10^5 iterations).
    pub fn steady_state_prediction_covariance(&self) -> Result<DMatrix<f64>> {
        const REL_TOL: f64 = 1e-12;
        const MAX_ITERS: usize = 100_000;

        let mut m = self.q.clone();
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_ITERS {
            let s = &self.h * &m * self.h.transpose() + &self.r;
            let chol = s
                .cholesky()
                .ok_or(Error::Singular { what: "innovation covariance H M Hᵀ + R" })?;
            let hm = &self.h * &m;
            // M Hᵀ S⁻¹ H M = (H M)ᵀ · S⁻¹ (H M), exploiting M's symmetry.
            let posterior = &m - hm.transpose() * chol.solve(&hm);
            let mut next = &self.f * posterior * self.f.transpose() + &self.q;
            linalg::symmetrize_in_place(&mut next);
            residual = (&next - &m).amax() / next.amax().max(1.0);
            m = next;
            if residual < REL_TOL {
                return Ok(m);
            }
        }
        Err(Error::RiccatiDivergence { iterations: MAX_ITERS, residual })
    }
}

fn check_covariance(m: &DMatrix<f64>, dims: (usize, usize), what: &'static str) -> Result<()> {
    if m.shape() != dims {
        return Err(Error::InvalidArgument(format!(
            "{what} must be {}x{}, got {}x{}",
            dims.0,
            dims.1,
            m.nrows(),
            m.ncols()
        )));
    }
    if !linalg::is_symmetric(m, COV_CHECK_TOL) {
        return Err(Error::NotCovariance { what });
    }
    if linalg::min_symmetric_eigenvalue(m) < -COV_CHECK_TOL * linalg::scale_of(m) {
        return Err(Error::NotCovariance { what });
    }
    Ok(())
}

/// PBH test on every marginally stable or unstable mode of F: if some
/// eigenvalue λ with |λ| ≥ 1 makes [λI − F; H] rank deficient, that mode is
/// invisible to the measurements and steady-state filtering is ill-posed.
/// Only warns; see the constructor contract.
fn warn_if_undetectable(f: &DMatrix<f64>, h: &DMatrix<f64>) {
    let nx = f.nrows();
    let ny = h.nrows();
    for lambda in f.complex_eigenvalues().iter() {
        if lambda.norm() < 1.0 - 1e-9 {
            continue;
        }
        let stacked = DMatrix::<Complex<f64>>::from_fn(nx + ny, nx, |i, j| {
            if i < nx {
                let diag = if i == j { *lambda } else { Complex::new(0.0, 0.0) };
                diag - Complex::new(f[(i, j)], 0.0)
            } else {
                Complex::new(h[(i - nx, j)], 0.0)
            }
        });
        let sv = stacked.singular_values();
        if sv.min() <= 1e-10 * sv.max() {
            log::warn!(
                "(F, H) looks undetectable: mode at eigenvalue {lambda} is unobserved; \
                 steady-state covariances may diverge"
            );
        }
    }
}

// ============================================================================
// Beliefs
// ============================================================================

/// Gaussian state belief (mean, covariance).
///
/// Invariants: `cov` is symmetric to 1e-10 relative tolerance with
/// eigenvalues ≥ −1e-12·trace. Checked in [`GaussianBelief::new`]; filter
/// updates maintain them by explicit symmetrization.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::InvalidArgument(format!(
                "covariance must be {0}x{0} to match the mean, got {1}x{2}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if !linalg::is_symmetric(&cov, COV_CHECK_TOL) {
            return Err(Error::NotCovariance { what: "belief covariance" });
        }
        if linalg::min_symmetric_eigenvalue(&cov) < -1e-12 * cov.trace() {
            return Err(Error::NotCovariance { what: "belief covariance" });
        }
        Ok(GaussianBelief { mean, cov })
    }

    /// Internal fast path; callers are responsible for the invariants.
    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        GaussianBelief { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Draws mean + L·u where L is a Cholesky-style factor of `cov` (with a
/// single diagonal-jitter retry) and u is standard normal. A zero covariance
/// returns the mean exactly. Consumes exactly `mean.len()` normal draws.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if cov.nrows() != mean.len() {
        return Err(Error::InvalidArgument(format!(
            "covariance is {}x{} but the mean has length {}",
            cov.nrows(),
            cov.ncols(),
            mean.len()
        )));
    }
    Ok(linalg::NoiseFactor::new(cov)?.sample(rng, mean))
}

// ============================================================================
// Simulation
// ============================================================================

/// One simulated ground-truth rollout: `states` holds x_0 … x_T and
/// `measurements` holds y_0 … y_{T−1} with y_k = H·x_k + v_k.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

/// Rolls the model forward `steps` transitions from `x0`.
///
/// Per step k the process noise w_k is drawn first, then the measurement
/// noise v_k; exactly `steps` draws of each are consumed, so trajectories
/// with a common prefix of steps share a common prefix of draws.
pub fn simulate<R: Rng + ?Sized>(
    model: &LinearSystemModel,
    x0: &DVector<f64>,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if x0.len() != model.nx() {
        return Err(Error::InvalidArgument(format!(
            "x0 has length {}, model expects {}",
            x0.len(),
            model.nx()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("simulate requires steps >= 1".into()));
    }
    let process = linalg::NoiseFactor::new(model.q())?;
    let meas = linalg::NoiseFactor::new(model.r())?;
    let zero_x = DVector::zeros(model.nx());
    let zero_y = DVector::zeros(model.ny());

    let mut states = Vec::with_capacity(steps + 1);
    let mut measurements = Vec::with_capacity(steps);
    states.push(x0.clone());
    for k in 0..steps {
        let w = process.sample(rng, &zero_x);
        let next = model.f() * &states[k] + w;
        let v = meas.sample(rng, &zero_y);
        measurements.push(model.h() * &states[k] + v);
        states.push(next);
    }
    Ok(Trajectory { states, measurements })
}

// ============================================================================
// Tests
// ============================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn golden_scalar_model() -> LinearSystemModel {
        LinearSystemModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn constant_velocity_matrices_match_benchmark() {
        let m = LinearSystemModel::constant_velocity_2d(0.3, 1.0).unwrap();
        assert_eq!(m.f()[(0, 1)], 0.3);
        assert_eq!(m.f()[(2, 3)], 0.3);
        assert_eq!(m.f()[(0, 2)], 0.0);
        assert_relative_eq!(m.q()[(0, 0)], 0.009, max_relative = 1e-12);
        assert_relative_eq!(m.q()[(0, 1)], 0.045, max_relative = 1e-12);
        assert_relative_eq!(m.q()[(1, 1)], 0.3, max_relative = 1e-12);
        assert_eq!(m.q()[(0, 2)], 0.0);
        assert_eq!(m.r(), &DMatrix::identity(2, 2));
        // H picks components 0 and 2.
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.h() * x, DVector::from_vec(vec![1.0, 3.0]));
    }

    #[test]
    fn constant_velocity_rejects_degenerate_parameters() {
        assert!(LinearSystemModel::constant_velocity_2d(0.0, 1.0).is_err());
        assert!(LinearSystemModel::constant_velocity_2d(1.0, 0.0).is_err());
        // q=1, delta=1: upper-left noise block is [[1/3, 1/2], [1/2, 1]].
        let m = LinearSystemModel::constant_velocity_2d(1.0, 1.0).unwrap();
        assert_relative_eq!(m.q()[(0, 0)], 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(m.q()[(0, 1)], 0.5, max_relative = 1e-12);
        assert_relative_eq!(m.q()[(1, 1)], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        let i2 = DMatrix::identity(2, 2);
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        // H with wrong column count.
        assert!(LinearSystemModel::new(
            i2.clone(),
            DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            i2.clone(),
            DMatrix::identity(1, 1),
        )
        .is_err());
        // Asymmetric Q.
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(LinearSystemModel::new(i2.clone(), h.clone(), asym, DMatrix::identity(1, 1)).is_err());
        // Indefinite Q.
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(LinearSystemModel::new(i2.clone(), h.clone(), indef, DMatrix::identity(1, 1)).is_err());
        // R with wrong shape.
        assert!(LinearSystemModel::new(i2.clone(), h, i2.clone(), DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn belief_validation_checks_symmetry_and_psd() {
        let mean = DVector::zeros(2);
        assert!(GaussianBelief::new(mean.clone(), DMatrix::identity(2, 2)).is_ok());
        assert!(GaussianBelief::new(mean.clone(), DMatrix::zeros(2, 2)).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(GaussianBelief::new(mean.clone(), asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianBelief::new(mean, indef).is_err());
    }

    #[test]
    fn riccati_golden_ratio_fixed_point() {
        // Scalar F=H=Q=R=1: M² − M − 1 = 0, so M = (1+√5)/2.
        let m = golden_scalar_model().steady_state_prediction_covariance().unwrap();
        assert!((m[(0, 0)] - 1.618_033_988_749_895).abs() < 1e-9);
    }

    #[test]
    fn riccati_stable_noise_free_plant_settles_at_zero() {
        let model = LinearSystemModel::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let m = model.steady_state_prediction_covariance().unwrap();
        assert!(m[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn riccati_benchmark_fixed_point() {
        let model = LinearSystemModel::constant_velocity_2d(0.3, 1.0).unwrap();
        let m = model.steady_state_prediction_covariance().unwrap();
        // Frozen against an independent fixed-point iteration.
        assert_relative_eq!(m[(0, 0)], 0.774_041_175_017_894_9, max_relative = 1e-8);
        // Plug-back residual.
        let s = model.h() * &m * model.h().transpose() + model.r();
        let hm = model.h() * &m;
        let posterior = &m - hm.transpose() * s.cholesky().unwrap().solve(&hm);
        let next = model.f() * posterior * model.f().transpose() + model.q();
        assert!((&next - &m).amax() < 1e-9);
        // Symmetric PSD.
        assert!(linalg::is_symmetric(&m, 1e-12));
        assert!(linalg::min_symmetric_eigenvalue(&m) > -1e-12);
    }

    #[test]
    fn simulate_noise_free_fixed_point() {
        let model = LinearSystemModel::new(
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let t = simulate(&model, &DVector::from_element(1, 3.0), 4, &mut rng).unwrap();
        assert_eq!(t.states.len(), 5);
        assert_eq!(t.measurements.len(), 4);
        for s in &t.states {
            assert_eq!(s[0], 3.0);
        }
        for y in &t.measurements {
            assert_eq!(y[0], 6.0);
        }
    }

    #[test]
    fn simulate_noise_free_constant_velocity() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let model =
            LinearSystemModel::new(f, h, DMatrix::zeros(2, 2), DMatrix::zeros(1, 1)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let t = simulate(&model, &DVector::from_vec(vec![0.0, 1.0]), 2, &mut rng).unwrap();
        let expected = [[0.0, 1.0], [0.3, 1.0], [0.6, 1.0]];
        for (state, want) in t.states.iter().zip(expected) {
            assert_relative_eq!(state[0], want[0], max_relative = 1e-15);
            assert_relative_eq!(state[1], want[1], max_relative = 1e-15);
        }
    }

    #[test]
    fn simulate_prefix_draws_are_shared() {
        let model = LinearSystemModel::constant_velocity_2d(0.3, 1.0).unwrap();
        let x0 = DVector::zeros(4);
        let short = simulate(&model, &x0, 3, &mut ChaCha12Rng::seed_from_u64(11)).unwrap();
        let long = simulate(&model, &x0, 6, &mut ChaCha12Rng::seed_from_u64(11)).unwrap();
        for k in 0..=3 {
            assert_eq!(short.states[k], long.states[k]);
        }
        for k in 0..3 {
            assert_eq!(short.measurements[k], long.measurements[k]);
        }
    }

    #[test]
    fn simulate_residual_moments_match_noise_covariances() {
        let model = LinearSystemModel::constant_velocity_2d(0.3, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 10_000;
        let t = simulate(&model, &DVector::zeros(4), n, &mut rng).unwrap();
        let mut q_hat = DMatrix::zeros(4, 4);
        let mut r_hat = DMatrix::zeros(2, 2);
        for k in 0..n {
            let w = &t.states[k + 1] - model.f() * &t.states[k];
            q_hat += &w * w.transpose();
            let v = &t.measurements[k] - model.h() * &t.states[k];
            r_hat += &v * v.transpose();
        }
        q_hat /= n as f64;
        r_hat /= n as f64;
        for i in 0..4 {
            for j in 0..4 {
                let want = model.q()[(i, j)];
                let tol = 0.05 * model.q().amax();
                assert!(
                    (q_hat[(i, j)] - want).abs() < tol,
                    "Q[{i},{j}]: got {}, want {want}",
                    q_hat[(i, j)]
                );
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((r_hat[(i, j)] - model.r()[(i, j)]).abs() < 0.05);
            }
        }
    }

    #[test]
    fn sample_gaussian_moment_checks() {
        let mean = DVector::from_vec(vec![1.0, 2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 100_000;
        let mut sum = DVector::zeros(2);
        let mut sum_sq = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let x = sample_gaussian(&mean, &cov, &mut rng).unwrap();
            sum += &x;
            sum_sq += &x * x.transpose();
        }
        let m_hat = sum / n as f64;
        let cov_hat = sum_sq / n as f64 - &m_hat * m_hat.transpose();
        assert!((m_hat[0] - 1.0).abs() < 0.02);
        assert!((m_hat[1] - 2.0).abs() < 0.02);
        for i in 0..2 {
            for j in 0..2 {
                assert!((cov_hat[(i, j)] - cov[(i, j)]).abs() < 0.1);
            }
        }
    }

    #[test]
    fn sample_gaussian_zero_covariance_is_exact() {
        let mean = DVector::from_vec(vec![4.0, -1.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let x = sample_gaussian(&mean, &DMatrix::zeros(2, 2), &mut rng).unwrap();
        assert_eq!(x, mean);
    }
}
