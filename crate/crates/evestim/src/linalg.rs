//! Small shared helpers for symmetric matrices and Gaussian noise factors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Scale used for relative comparisons against zero; never below 1 so that
/// all-zero matrices compare with an absolute tolerance.
pub(crate) fn scale_of(m: &DMatrix<f64>) -> f64 {
    m.amax().max(1.0)
}

/// Symmetry check with tolerance relative to the largest entry.
pub(crate) fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let tol = rel_tol * scale_of(m);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Replaces `m` with (m + mᵀ)/2.
pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().min()
}

/// Cholesky factor of a covariance, used to draw correlated Gaussian noise.
///
/// A zero covariance carries no factor and reproduces the mean exactly.
/// Every draw consumes exactly `dim` standard normals regardless of the
/// covariance's rank, so stream positions never depend on the noise shape.
#[derive(Debug, Clone)]
pub(crate) struct NoiseFactor {
    dim: usize,
    l: Option<DMatrix<f64>>,
}

impl NoiseFactor {
    /// Factorizes `cov`; on Cholesky failure retries once with diagonal
    /// jitter 1e-12·trace(cov)·I, then reports the covariance as invalid.
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::InvalidArgument(format!(
                "covariance must be square, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let dim = cov.nrows();
        if cov.iter().all(|&v| v == 0.0) {
            return Ok(NoiseFactor { dim, l: None });
        }
        if let Some(chol) = cov.clone().cholesky() {
            return Ok(NoiseFactor { dim, l: Some(chol.unpack()) });
        }
        let jitter = 1e-12 * cov.trace();
        if jitter > 0.0 {
            let jittered = cov + DMatrix::identity(dim, dim) * jitter;
            if let Some(chol) = jittered.cholesky() {
                return Ok(NoiseFactor { dim, l: Some(chol.unpack()) });
            }
        }
        Err(Error::NotCovariance { what: "sampling covariance" })
    }

    /// Draws mean + L·u with u standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, mean: &DVector<f64>) -> DVector<f64> {
        let u = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        match &self.l {
            Some(l) => mean + l * u,
            None => mean.clone(),
        }
    }

    /// Fills an entire matrix column-by-column with zero-mean draws.
    pub fn sample_matrix<R: Rng + ?Sized>(&self, rng: &mut R, cols: usize) -> DMatrix<f64> {
        let u = DMatrix::from_fn(self.dim, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        match &self.l {
            Some(l) => l * u,
            None => DMatrix::zeros(self.dim, cols),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let mut m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 1.0, 2.0]);
        symmetrize_in_place(&mut m);
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 0)], 2.0);
    }

    #[test]
    fn zero_covariance_reproduces_mean_exactly() {
        let f = NoiseFactor::new(&DMatrix::zeros(3, 3)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(f.sample(&mut rng, &mean), mean);
    }

    #[test]
    fn draw_count_is_rank_independent() {
        // Zero and full-rank covariances must consume the same number of
        // draws so downstream streams stay aligned.
        let zero = NoiseFactor::new(&DMatrix::zeros(2, 2)).unwrap();
        let full = NoiseFactor::new(&DMatrix::identity(2, 2)).unwrap();
        let mean = DVector::zeros(2);
        let mut a = ChaCha12Rng::seed_from_u64(9);
        let mut b = ChaCha12Rng::seed_from_u64(9);
        zero.sample(&mut a, &mean);
        full.sample(&mut b, &mean);
        use rand::Rng;
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn semidefinite_covariance_samples_after_jitter() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let f = NoiseFactor::new(&cov).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = f.sample(&mut rng, &DVector::zeros(2));
        // The rank-deficient direction only carries jitter-scale noise.
        assert!(x[1].abs() < 1e-4, "jitter direction too noisy: {}", x[1]);
    }
}
