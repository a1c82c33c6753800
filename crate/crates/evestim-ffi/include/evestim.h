#ifndef EVESTIM_H
#define EVESTIM_H

/* This header is generated by cbindgen from the evestim-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum {
  EV_STATUS_OK = 0,
  // A required pointer argument was null.
  EV_STATUS_NULL_POINTER = 1,
  // Dimensions or values that the library cannot work with.
  EV_STATUS_INVALID_ARGUMENT = 2,
  // A covariance argument is not symmetric positive semidefinite.
  EV_STATUS_NOT_COVARIANCE = 3,
  // A matrix that must be inverted is numerically singular.
  EV_STATUS_SINGULAR = 4,
  // An iterative computation failed to converge.
  EV_STATUS_DIVERGED = 5,
  // The rejection sampler could not collect enough samples.
  EV_STATUS_STARVED = 6,
  // A quantity is undefined for the given inputs.
  EV_STATUS_UNDEFINED = 7,
  // Internal failure (a bug); details in the last error message.
  EV_STATUS_INTERNAL = 8,
} EvStatus;

// Opaque Gaussian belief (mean and covariance).
typedef struct EvBelief EvBelief;

// Opaque linear time-invariant system model.
typedef struct EvModel EvModel;

// Opaque rejection-sampling estimator with its own random stream.
typedef struct EvSampler EvSampler;

// Opaque trigger weighting function.
typedef struct EvWeighting EvWeighting;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the message of the most recent failure on this thread. The
// pointer stays valid until the next failing call on the same thread.
const char *ev_last_error_message(void);

// Library version as a static nul-terminated string.
const char *ev_version(void);

// Creates a model x' = F x + w, y = H x + v with process noise covariance Q
// and measurement noise covariance R. `f` and `q` are nx*nx, `h` is ny*nx,
// `r` is ny*ny, all row-major.
//
// # Safety
// `f`, `h`, `q`, `r` must point to arrays of the stated sizes and `out`
// must be a valid location for the handle.
EvStatus ev_model_new(size_t nx,
                      size_t ny,
                      const double *f,
                      const double *h,
                      const double *q,
                      const double *r,
                      EvModel **out);

// Creates the planar constant-velocity tracking model with sampling period
// `dt`, acceleration noise intensity `q`, and unit measurement noise on
// both position components (state layout: x, vx, y, vy).
//
// # Safety
// `out` must be a valid location for the handle.
EvStatus ev_model_constant_velocity_2d(double dt, double q, EvModel **out);

// State dimension, or 0 for a null handle.
//
// # Safety
// `model` must be a live handle or null.
size_t ev_model_nx(const EvModel *model);

// Measurement dimension, or 0 for a null handle.
//
// # Safety
// `model` must be a live handle or null.
size_t ev_model_ny(const EvModel *model);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must have been returned by an `ev_model_*` constructor and not
// freed before.
void ev_model_free(EvModel *model);

// Creates a Gaussian belief from a mean of length `dim` and a row-major
// `dim*dim` covariance.
//
// # Safety
// `mean` and `cov` must point to arrays of the stated sizes and `out` must
// be a valid location for the handle.
EvStatus ev_belief_new(size_t dim, const double *mean, const double *cov, EvBelief **out);

// Belief dimension, or 0 for a null handle.
//
// # Safety
// `belief` must be a live handle or null.
size_t ev_belief_dim(const EvBelief *belief);

// Copies the mean into `out` (length `len`, which must equal the belief
// dimension).
//
// # Safety
// `belief` must be a live handle; `out` must hold `len` doubles.
EvStatus ev_belief_mean(const EvBelief *belief, double *out, size_t len);

// Copies the covariance row-major into `out` (length `len`, which must
// equal the squared belief dimension).
//
// # Safety
// `belief` must be a live handle; `out` must hold `len` doubles.
EvStatus ev_belief_cov(const EvBelief *belief, double *out, size_t len);

// Releases a belief handle. Null is ignored.
//
// # Safety
// `belief` must have been returned by this library and not freed before.
void ev_belief_free(EvBelief *belief);

// Creates the smooth weighting exp(-0.5 (zᵀZ⁻¹z)^(β/2)) with Z = alpha_z·I
// of size `dim`.
//
// # Safety
// `out` must be a valid location for the handle.
EvStatus ev_weighting_isotropic(double beta, double alpha_z, size_t dim, EvWeighting **out);

// Creates the deterministic ellipsoid indicator (send when zᵀZ⁻¹z > 1)
// with Z = alpha_z·I of size `dim`.
//
// # Safety
// `out` must be a valid location for the handle.
EvStatus ev_weighting_deterministic(double alpha_z, size_t dim, EvWeighting **out);

// Evaluates the weighting at innovation `z` (length `len`).
//
// # Safety
// `weighting` must be a live handle; `z` must hold `len` doubles; `out`
// must be a valid location for one double.
EvStatus ev_weighting_phi(const EvWeighting *weighting, const double *z, size_t len, double *out);

// Probability that a measurement `y` is transmitted given the implicit
// value `c` (both length `len`): 1 - phi(y - c).
//
// # Safety
// `weighting` must be a live handle; `y` and `c` must hold `len` doubles;
// `out` must be a valid location for one double.
EvStatus ev_weighting_transmission_probability(const EvWeighting *weighting,
                                               const double *y,
                                               const double *c,
                                               size_t len,
                                               double *out);

// Releases a weighting handle. Null is ignored.
//
// # Safety
// `weighting` must have been returned by this library and not freed before.
void ev_weighting_free(EvWeighting *weighting);

// Propagates a belief through the model dynamics.
//
// # Safety
// `belief` and `model` must be live handles; `out` must be a valid
// location for the new handle.
EvStatus ev_kf_predict(const EvBelief *belief, const EvModel *model, EvBelief **out);

// Standard Kalman measurement update of a predicted belief with `y`
// (length equal to the model's measurement dimension).
//
// # Safety
// `belief` and `model` must be live handles; `y` must hold ny doubles;
// `out` must be a valid location for the new handle.
EvStatus ev_kf_update(const EvBelief *belief,
                      const EvModel *model,
                      const double *y,
                      EvBelief **out);

// Event-aware measurement update of a predicted belief. On a transmission
// (`gamma` nonzero) pass the measurement `y` and optionally the implicit
// value `c` (may be null); on silence pass `c` and leave `y` null. The
// weighting supplies the silent-step noise inflation.
//
// # Safety
// `belief`, `model`, and `weighting` must be live handles; `y` and `c`,
// when non-null, must hold ny doubles; `out` must be a valid location for
// the new handle.
EvStatus ev_event_update(const EvBelief *belief,
                         const EvModel *model,
                         int gamma,
                         const double *y,
                         const double *c,
                         const EvWeighting *weighting,
                         EvBelief **out);

// Creates a rejection-sampling estimator starting from `initial`, keeping
// `samples` samples per step, trying `reselections` alternative subsets in
// the down-selection, giving up after `max_batches` batches within one
// step, and drawing its randomness from a stream seeded by `seed`.
//
// # Safety
// `initial` must be a live handle; `out` must be a valid location for the
// handle.
EvStatus ev_sampler_new(const EvBelief *initial,
                        size_t samples,
                        size_t reselections,
                        size_t max_batches,
                        uint64_t seed,
                        EvSampler **out);

// Advances the sampler by one step (prediction and event-aware update in
// one call). On a transmission (`gamma` nonzero) pass `y` and leave `c`
// null; on silence pass the implicit value `c` and leave `y` null.
//
// # Safety
// `sampler`, `model`, and `weighting` must be live handles; `y` and `c`,
// when non-null, must hold ny doubles.
EvStatus ev_sampler_step(EvSampler *sampler,
                         const EvModel *model,
                         int gamma,
                         const double *y,
                         const double *c,
                         const EvWeighting *weighting);

// Copies the sampler's current belief into a new handle.
//
// # Safety
// `sampler` must be a live handle; `out` must be a valid location for the
// new handle.
EvStatus ev_sampler_belief(const EvSampler *sampler, EvBelief **out);

// Releases a sampler handle. Null is ignored.
//
// # Safety
// `sampler` must have been returned by `ev_sampler_new` and not freed
// before.
void ev_sampler_free(EvSampler *sampler);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVESTIM_H */
