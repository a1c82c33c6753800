//! C ABI for the event-triggered estimation library.
//!
//! All objects live behind opaque handles created by `ev_*_new` functions
//! and released by the matching `ev_*_free`. Every fallible call returns an
//! `EvStatus`; on failure a human-readable message is available from
//! `ev_last_error_message` until the next failing call on the same thread.
//! Matrices cross the boundary as row-major `double` arrays with explicit
//! dimensions, and output buffers are provided by the caller together with
//! their length so the library can refuse mismatched sizes.
//!
//! No function transfers ownership of its pointer arguments; handles may be
//! shared across calls but each handle must only be used by one thread at a
//! time.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use evestim::estimators::{
    kf_predict, kf_update, sampling_update, sebkf_update, SamplingConfig, SamplingState,
};
use evestim::model::{GaussianBelief, LinearSystemModel};
use evestim::triggers::WeightingSpec;
use evestim::Error;

// ============================================================================
// Status codes and error reporting
// ============================================================================

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Dimensions or values that the library cannot work with.
    InvalidArgument = 2,
    /// A covariance argument is not symmetric positive semidefinite.
    NotCovariance = 3,
    /// A matrix that must be inverted is numerically singular.
    Singular = 4,
    /// An iterative computation failed to converge.
    Diverged = 5,
    /// The rejection sampler could not collect enough samples.
    Starved = 6,
    /// A quantity is undefined for the given inputs.
    Undefined = 7,
    /// Internal failure (a bug); details in the last error message.
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: EvStatus, message: &str) -> EvStatus {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
    status
}

fn fail_error(err: &Error) -> EvStatus {
    let status = match err {
        Error::InvalidArgument(_) | Error::OracleMismatch(_) => EvStatus::InvalidArgument,
        Error::NotCovariance { .. } => EvStatus::NotCovariance,
        Error::Singular { .. } => EvStatus::Singular,
        Error::RiccatiDivergence { .. } => EvStatus::Diverged,
        Error::SamplingStarvation { .. } => EvStatus::Starved,
        Error::GridTooSmall { .. } => EvStatus::InvalidArgument,
        Error::Undefined(_) => EvStatus::Undefined,
        Error::AtScenarioPoint { source, .. } => return fail_error(source),
        Error::Io(_) => EvStatus::Internal,
    };
    fail(status, &err.to_string())
}

/// Returns the message of the most recent failure on this thread. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ev_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ev_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn guarded<F: FnOnce() -> EvStatus>(body: F) -> EvStatus {
    catch_unwind(AssertUnwindSafe(body))
        .unwrap_or_else(|_| fail(EvStatus::Internal, "panic inside evestim"))
}

// ============================================================================
// Handles
// ============================================================================

/// Opaque linear time-invariant system model.
pub struct EvModel(LinearSystemModel);

/// Opaque Gaussian belief (mean and covariance).
pub struct EvBelief(GaussianBelief);

/// Opaque trigger weighting function.
pub struct EvWeighting(WeightingSpec);

/// Opaque rejection-sampling estimator with its own random stream.
pub struct EvSampler {
    state: SamplingState,
    config: SamplingConfig,
    rng: ChaCha12Rng,
}

macro_rules! check_null {
    ($($ptr:expr),+ $(,)?) => {
        $(
            if $ptr.is_null() {
                return fail(EvStatus::NullPointer, concat!(stringify!($ptr), " is null"));
            }
        )+
    };
}

unsafe fn slice<'a>(ptr: *const f64, len: usize) -> &'a [f64] {
    std::slice::from_raw_parts(ptr, len)
}

fn copy_vector(v: &DVector<f64>, out: *mut f64, len: usize) -> EvStatus {
    if v.len() != len {
        return fail(
            EvStatus::InvalidArgument,
            &format!("output buffer holds {len} values, need {}", v.len()),
        );
    }
    let out = unsafe { std::slice::from_raw_parts_mut(out, len) };
    out.copy_from_slice(v.as_slice());
    EvStatus::Ok
}

fn copy_matrix_row_major(m: &DMatrix<f64>, out: *mut f64, len: usize) -> EvStatus {
    if m.len() != len {
        return fail(
            EvStatus::InvalidArgument,
            &format!("output buffer holds {len} values, need {}", m.len()),
        );
    }
    let out = unsafe { std::slice::from_raw_parts_mut(out, len) };
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[i * m.ncols() + j] = m[(i, j)];
        }
    }
    EvStatus::Ok
}

// ============================================================================
// Model
// ============================================================================

/// Creates a model x' = F x + w, y = H x + v with process noise covariance Q
/// and measurement noise covariance R. `f` and `q` are nx*nx, `h` is ny*nx,
/// `r` is ny*ny, all row-major.
///
/// # Safety
/// `f`, `h`, `q`, `r` must point to arrays of the stated sizes and `out`
/// must be a valid location for the handle.
#[no_mangle]
pub unsafe extern "C" fn ev_model_new(
    nx: usize,
    ny: usize,
    f: *const f64,
    h: *const f64,
    q: *const f64,
    r: *const f64,
    out: *mut *mut EvModel,
) -> EvStatus {
    guarded(|| {
        check_null!(f, h, q, r, out);
        if nx == 0 || ny == 0 {
            return fail(EvStatus::InvalidArgument, "dimensions must be positive");
        }
        let model = LinearSystemModel::new(
            DMatrix::from_row_slice(nx, nx, slice(f, nx * nx)),
            DMatrix::from_row_slice(ny, nx, slice(h, ny * nx)),
            DMatrix::from_row_slice(nx, nx, slice(q, nx * nx)),
            DMatrix::from_row_slice(ny, ny, slice(r, ny * ny)),
        );
        match model {
            Ok(model) => {
                *out = Box::into_raw(Box::new(EvModel(model)));
                EvStatus::Ok
            }
            Err(err) => fail_error(&err),
        }
    })
}

/// Creates the planar constant-velocity tracking model with sampling period
/// `dt`, acceleration noise intensity `q`, and unit measurement noise on
/// both position components (state layout: x, vx, y, vy).
///
/// # Safety
/// `out` must be a valid location for the handle.
#[no_mangle]
pub unsafe extern "C" fn ev_model_constant_velocity_2d(
    dt: f64,
    q: f64,
    out: *mut *mut EvModel,
) -> EvStatus {
    guarded(|| {
        check_null!(out);
        match LinearSystemModel::constant_velocity_2d(dt, q) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(EvModel(model)));
                EvStatus::Ok
            }
            Err(err) => fail_error(&err),
        }
    })
}

/// State dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ev_model_nx(model: *const EvModel) -> usize {
    if model.is_null() {
        0
    } else {
        (*model).0.nx()
    }
}

/// Measurement dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ev_model_ny(model: *const EvModel) -> usize {
    if model.is_null() {
        0
    } else {
        (*model).0.ny()
    }
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must have been returned by an `ev_model_*` constructor and not
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn ev_model_free(model: *mut EvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ============================================================================
// Belief
// ============================================================================

/// Creates a Gaussian belief from a mean of length `dim` and a row-major
/// `dim*dim` covariance.
///
/// # Safety
/// `mean` and `cov` must point to arrays of the stated sizes and `out` must
/// be a valid location for the handle.
#[no_mangle]
pub unsafe extern "C" fn ev_belief_new(
    dim: usize,
    mean: *const f64,
    cov: *const f64,
    out: *mut *mut EvBelief,
) -> EvStatus {
    guarded(|| {
        check_null!(mean, cov, out);
        if dim == 0 {
            return fail(EvStatus::InvalidArgument, "dimension must be positive");
        }
        let belief = GaussianBelief::new(
            DVector::from_column_slice(slice(mean, dim)),
            DMatrix::from_row_slice(dim, dim, slice(cov, dim * dim)),
        );
        match belief {
            Ok(belief) => {
                *out = Box::into_raw(Box::new(EvBelief(belief)));
                EvStatus::Ok
            }
            Err(err) => fail_error(&err),
        }
    })
}

/// Belief dimension, or 0 for a null handle.
///
/// # Safety
/// `belief` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ev_belief_dim(belief: *const EvBelief) -> usize {
    if belief.is_null() {
        0
    } else {
        (*belief).0.dim()
    }
}

/// Copies the mean into `out` (length `len`, which must equal the belief
/// dimension).
///
/// # Safety
/// `belief` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ev_belief_mean(
    belief: *const EvBelief,
    out: *mut f64,
    len: usize,
) -> EvStatus {
    guarded(|| {
        check_null!(belief, out);
        copy_vector(&(*belief).0.mean, out, len)
    })
}

/// Copies the covariance row-major into `out` (length `len`, which must
/// equal the squared belief dimension).
///
/// # Safety
/// `belief` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ev_belief_cov(
    belief: *const EvBelief,
    out: *mut f64,
    len: usize,
) -> EvStatus {
    guarded(|| {
        check_null!(belief, out);
        copy_matrix_row_major(&(*belief).0.cov, out, len)
    })
}

/// Releases a belief handle. Null is ignored.
///
/// # Safety
/// `belief` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn ev_belief_free(belief: *mut EvBelief) {
    if !belief.is_null() {
        drop(Box::from_raw(belief));
    }
}

// ============================================================================
// Weighting
// ============================================================================

/// Creates the smooth weighting exp(-0.5 (zᵀZ⁻¹z)^(β/2)) with Z = alpha_z·I
/// of size `dim`.
///
/// # Safety
/// `out` must be a valid location for the handle.
#[no_mangle]
pub unsafe extern "C" fn ev_weighting_isotropic(
    beta: f64,
    alpha_z: f64,
    dim: usize,
    out: *mut *mut EvWeighting,
) -> EvStatus {
    guarded(|| {
        check_null!(out);
        match WeightingSpec::isotropic(beta, alpha_z, dim) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(EvWeighting(spec)));
                EvStatus::Ok
            }
            Err(err) => fail_error(&err),
        }
    })
}

/// Creates the deterministic ellipsoid indicator (send when zᵀZ⁻¹z > 1)
/// with Z = alpha_z·I of size `dim`.
///
/// # Safety
/// `out` must be a valid location for the handle.
#[no_mangle]
pub unsafe extern "C" fn ev_weighting_deterministic(
    alpha_z: f64,
    dim: usize,
    out: *mut *mut EvWeighting,
) -> EvStatus {
    guarded(|| {
        check_null!(out);
        match WeightingSpec::deterministic_isotropic(alpha_z, dim) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(EvWeighting(spec)));
                EvStatus::Ok
            }
            Err(err) => fail_error(&err),
        }
    })
}

/// Evaluates the weighting at innovation `z` (length `len`).
///
/// # Safety
/// `weighting` must be a live handle; `z` must hold `len` doubles; `out`
/// must be a valid location for one double.
#[no_mangle]
pub unsafe extern "C" fn ev_weighting_phi(
    weighting: *const EvWeighting,
    z: *const f64,
    len: usize,
    out: *mut f64,
) -> EvStatus {
    guarded(|| {
        check_null!(weighting, z, out);
        let spec = &(*weighting).0;
        if len != spec.dim() {
            return fail(
                EvStatus::InvalidArgument,
                &format!("innovation has {len} entries, weighting expects {}", spec.dim()),
            );
        }
        *out = spec.phi(&DVector::from_column_slice(slice(z, len)));
        EvStatus::Ok
    })
}

/// Probability that a measurement `y` is transmitted given the implicit
/// value `c` (both length `len`): 1 - phi(y - c).
///
/// # Safety
/// `weighting` must be a live handle; `y` and `c` must hold `len` doubles;
/// `out` must be a valid location for one double.
#[no_mangle]
pub unsafe extern "C" fn ev_weighting_transmission_probability(
    weighting: *const EvWeighting,
    y: *const f64,
    c: *const f64,
    len: usize,
    out: *mut f64,
) -> EvStatus {
    guarded(|| {
        check_null!(weighting, y, c, out);
        let spec = &(*weighting).0;
        if len != spec.dim() {
            return fail(
                EvStatus::InvalidArgument,
                &format!("measurement has {len} entries, weighting expects {}", spec.dim()),
            );
        }
        *out = spec.transmission_probability(
            &DVector::from_column_slice(slice(y, len)),
            &DVector::from_column_slice(slice(c, len)),
        );
        EvStatus::Ok
    })
}

/// Releases a weighting handle. Null is ignored.
///
/// # Safety
/// `weighting` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn ev_weighting_free(weighting: *mut EvWeighting) {
    if !weighting.is_null() {
        drop(Box::from_raw(weighting));
    }
}

// ============================================================================
// Filters
// ============================================================================

/// Propagates a belief through the model dynamics.
///
/// # Safety
/// `belief` and `model` must be live handles; `out` must be a valid
/// location for the new handle.
#[no_mangle]
pub unsafe extern "C" fn ev_kf_predict(
    belief: *const EvBelief,
    model: *const EvModel,
    out: *mut *mut EvBelief,
) -> EvStatus {
    guarded(|| {
        check_null!(belief, model, out);
        if (*belief).0.dim() != (*model).0.nx() {
            return fail(EvStatus::InvalidArgument, "belief does not match the model");
        }
        let next = kf_predict(&(*belief).0, &(*model).0);
        *out = Box::into_raw(Box::new(EvBelief(next)));
        EvStatus::Ok
    })
}

/// Standard Kalman measurement update of a predicted belief with `y`
/// (length equal to the model's measurement dimension).
///
/// # Safety
/// `belief` and `model` must be live handles; `y` must hold ny doubles;
/// `out` must be a valid location for the new handle.
#[no_mangle]
pub unsafe extern "C" fn ev_kf_update(
    belief: *const EvBelief,
    model: *const EvModel,
    y: *const f64,
    out: *mut *mut EvBelief,
) -> EvStatus {
    guarded(|| {
        check_null!(belief, model, y, out);
        if (*belief).0.dim() != (*model).0.nx() {
            return fail(EvStatus::InvalidArgument, "belief does not match the model");
        }
        let y = DVector::from_column_slice(slice(y, (*model).0.ny()));
        match kf_update(&(*belief).0, &(*model).0, &y) {
            Ok(next) => {
                *out = Box::into_raw(Box::new(EvBelief(next)));
                EvStatus::Ok
            }
            Err(err) => fail_error(&err),
        }
    })
}

/// Event-aware measurement update of a predicted belief. On a transmission
/// (`gamma` nonzero) pass the measurement `y` and optionally the implicit
/// value `c` (may be null); on silence pass `c` and leave `y` null. The
/// weighting supplies the silent-step noise inflation.
///
/// # Safety
/// `belief`, `model`, and `weighting` must be live handles; `y` and `c`,
/// when non-null, must hold ny doubles; `out` must be a valid location for
/// the new handle.
#[no_mangle]
pub unsafe extern "C" fn ev_event_update(
    belief: *const EvBelief,
    model: *const EvModel,
    gamma: c_int,
    y: *const f64,
    c: *const f64,
    weighting: *const EvWeighting,
    out: *mut *mut EvBelief,
) -> EvStatus {
    guarded(|| {
        check_null!(belief, model, weighting, out);
        if (*belief).0.dim() != (*model).0.nx() {
            return fail(EvStatus::InvalidArgument, "belief does not match the model");
        }
        let ny = (*model).0.ny();
        if (*weighting).0.dim() != ny {
            return fail(EvStatus::InvalidArgument, "weighting does not match the model");
        }
        let y = (!y.is_null()).then(|| DVector::from_column_slice(slice(y, ny)));
        let c = (!c.is_null()).then(|| DVector::from_column_slice(slice(c, ny)));
        let result = sebkf_update(
            &(*belief).0,
            &(*model).0,
            gamma != 0,
            y.as_ref(),
            c.as_ref(),
            (*weighting).0.shape_matrix(),
        );
        match result {
            Ok(next) => {
                *out = Box::into_raw(Box::new(EvBelief(next)));
                EvStatus::Ok
            }
            Err(err) => fail_error(&err),
        }
    })
}

// ============================================================================
// Sampling estimator
// ============================================================================

/// Creates a rejection-sampling estimator starting from `initial`, keeping
/// `samples` samples per step, trying `reselections` alternative subsets in
/// the down-selection, giving up after `max_batches` batches within one
/// step, and drawing its randomness from a stream seeded by `seed`.
///
/// # Safety
/// `initial` must be a live handle; `out` must be a valid location for the
/// handle.
#[no_mangle]
pub unsafe extern "C" fn ev_sampler_new(
    initial: *const EvBelief,
    samples: usize,
    reselections: usize,
    max_batches: usize,
    seed: u64,
    out: *mut *mut EvSampler,
) -> EvStatus {
    guarded(|| {
        check_null!(initial, out);
        let config = SamplingConfig {
            samples,
            reselections,
            max_batches,
        };
        if let Err(err) = config.validate() {
            return fail_error(&err);
        }
        *out = Box::into_raw(Box::new(EvSampler {
            state: SamplingState::new((*initial).0.clone()),
            config,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }));
        EvStatus::Ok
    })
}

/// Advances the sampler by one step (prediction and event-aware update in
/// one call). On a transmission (`gamma` nonzero) pass `y` and leave `c`
/// null; on silence pass the implicit value `c` and leave `y` null.
///
/// # Safety
/// `sampler`, `model`, and `weighting` must be live handles; `y` and `c`,
/// when non-null, must hold ny doubles.
#[no_mangle]
pub unsafe extern "C" fn ev_sampler_step(
    sampler: *mut EvSampler,
    model: *const EvModel,
    gamma: c_int,
    y: *const f64,
    c: *const f64,
    weighting: *const EvWeighting,
) -> EvStatus {
    guarded(|| {
        check_null!(sampler, model, weighting);
        let handle = &mut *sampler;
        let ny = (*model).0.ny();
        if handle.state.belief.dim() != (*model).0.nx() {
            return fail(EvStatus::InvalidArgument, "sampler does not match the model");
        }
        if (*weighting).0.dim() != ny {
            return fail(EvStatus::InvalidArgument, "weighting does not match the model");
        }
        let y = (!y.is_null()).then(|| DVector::from_column_slice(slice(y, ny)));
        let c = (!c.is_null()).then(|| DVector::from_column_slice(slice(c, ny)));
        let result = sampling_update(
            &handle.state,
            &(*model).0,
            gamma != 0,
            y.as_ref(),
            c.as_ref(),
            &(*weighting).0,
            &handle.config,
            &mut handle.rng,
        );
        match result {
            Ok(next) => {
                handle.state = next;
                EvStatus::Ok
            }
            Err(err) => fail_error(&err),
        }
    })
}

/// Copies the sampler's current belief into a new handle.
///
/// # Safety
/// `sampler` must be a live handle; `out` must be a valid location for the
/// new handle.
#[no_mangle]
pub unsafe extern "C" fn ev_sampler_belief(
    sampler: *const EvSampler,
    out: *mut *mut EvBelief,
) -> EvStatus {
    guarded(|| {
        check_null!(sampler, out);
        *out = Box::into_raw(Box::new(EvBelief((*sampler).state.belief.clone())));
        EvStatus::Ok
    })
}

/// Releases a sampler handle. Null is ignored.
///
/// # Safety
/// `sampler` must have been returned by `ev_sampler_new` and not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn ev_sampler_free(sampler: *mut EvSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}
