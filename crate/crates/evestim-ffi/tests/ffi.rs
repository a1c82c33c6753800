//! Exercises the C ABI end to end: handle lifecycles, error codes, and
//! numerical agreement with the underlying library.

use std::ffi::CStr;
use std::ptr;

use approx::assert_relative_eq;
use evestim_ffi::*;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(ev_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

unsafe fn scalar_model() -> *mut EvModel {
    let one = [1.0f64];
    let mut model = ptr::null_mut();
    let status = ev_model_new(
        1,
        1,
        one.as_ptr(),
        one.as_ptr(),
        one.as_ptr(),
        one.as_ptr(),
        &mut model,
    );
    assert_eq!(status, EvStatus::Ok, "{}", last_error());
    model
}

unsafe fn belief(dim: usize, mean: &[f64], cov: &[f64]) -> *mut EvBelief {
    let mut handle = ptr::null_mut();
    let status = ev_belief_new(dim, mean.as_ptr(), cov.as_ptr(), &mut handle);
    assert_eq!(status, EvStatus::Ok, "{}", last_error());
    handle
}

#[test]
fn version_and_null_guards() {
    unsafe {
        let version = CStr::from_ptr(ev_version()).to_str().unwrap();
        assert!(!version.is_empty());

        let mut out = ptr::null_mut();
        let status = ev_model_new(
            1,
            1,
            ptr::null(),
            ptr::null(),
            ptr::null(),
            ptr::null(),
            &mut out,
        );
        assert_eq!(status, EvStatus::NullPointer);
        assert!(last_error().contains("null"));

        assert_eq!(ev_model_nx(ptr::null()), 0);
        assert_eq!(ev_belief_dim(ptr::null()), 0);
        ev_model_free(ptr::null_mut());
        ev_belief_free(ptr::null_mut());
        ev_weighting_free(ptr::null_mut());
        ev_sampler_free(ptr::null_mut());
    }
}

#[test]
fn invalid_inputs_map_to_typed_statuses() {
    unsafe {
        // Asymmetric covariance.
        let mut handle = ptr::null_mut();
        let mean = [0.0, 0.0];
        let bad_cov = [1.0, 0.9, -0.9, 1.0];
        let status = ev_belief_new(2, mean.as_ptr(), bad_cov.as_ptr(), &mut handle);
        assert_eq!(status, EvStatus::NotCovariance);

        // Indefinite covariance.
        let indefinite = [1.0, 2.0, 2.0, 1.0];
        let status = ev_belief_new(2, mean.as_ptr(), indefinite.as_ptr(), &mut handle);
        assert_eq!(status, EvStatus::NotCovariance);

        // Zero-sized model.
        let one = [1.0f64];
        let mut model = ptr::null_mut();
        let status = ev_model_new(
            0,
            1,
            one.as_ptr(),
            one.as_ptr(),
            one.as_ptr(),
            one.as_ptr(),
            &mut model,
        );
        assert_eq!(status, EvStatus::InvalidArgument);

        // Bad weighting exponent.
        let mut weighting = ptr::null_mut();
        let status = ev_weighting_isotropic(-1.0, 1.0, 1, &mut weighting);
        assert_eq!(status, EvStatus::InvalidArgument);

        // Mismatched output buffer.
        let b = belief(1, &[0.5], &[2.0]);
        let mut too_small = [0.0f64; 0];
        let status = ev_belief_mean(b, too_small.as_mut_ptr(), 0);
        assert_eq!(status, EvStatus::InvalidArgument);
        ev_belief_free(b);
    }
}

#[test]
fn weighting_matches_the_intersection_value() {
    unsafe {
        let mut weighting = ptr::null_mut();
        assert_eq!(
            ev_weighting_isotropic(10.0, 4.0, 2, &mut weighting),
            EvStatus::Ok
        );
        // Innovation with quadratic form exactly 1 under Z = 4 I.
        let z = [2.0f64, 0.0];
        let mut phi = 0.0;
        assert_eq!(ev_weighting_phi(weighting, z.as_ptr(), 2, &mut phi), EvStatus::Ok);
        assert_relative_eq!(phi, 0.606_530_659_712_633_4, max_relative = 1e-12);

        let c = [0.0f64, 0.0];
        let mut p = 0.0;
        assert_eq!(
            ev_weighting_transmission_probability(weighting, z.as_ptr(), c.as_ptr(), 2, &mut p),
            EvStatus::Ok
        );
        assert_relative_eq!(p, 1.0 - phi, epsilon = 1e-15);

        // Dimension mismatch is refused.
        let status = ev_weighting_phi(weighting, z.as_ptr(), 1, &mut phi);
        assert_eq!(status, EvStatus::InvalidArgument);
        ev_weighting_free(weighting);

        let mut det = ptr::null_mut();
        assert_eq!(ev_weighting_deterministic(4.0, 2, &mut det), EvStatus::Ok);
        let inside = [1.0f64, 0.0];
        assert_eq!(ev_weighting_phi(det, inside.as_ptr(), 2, &mut phi), EvStatus::Ok);
        assert_eq!(phi, 1.0);
        let outside = [3.0f64, 0.0];
        assert_eq!(ev_weighting_phi(det, outside.as_ptr(), 2, &mut phi), EvStatus::Ok);
        assert_eq!(phi, 0.0);
        ev_weighting_free(det);
    }
}

#[test]
fn scalar_filter_round_trip_hits_known_values() {
    unsafe {
        let model = scalar_model();
        assert_eq!(ev_model_nx(model), 1);
        assert_eq!(ev_model_ny(model), 1);

        // Golden-ratio fixed point: predict from variance 1/phi gives
        // variance phi, and the variance after the update returns to 1/phi.
        let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
        let prior = belief(1, &[0.0], &[golden - 1.0]);
        let mut predicted = ptr::null_mut();
        assert_eq!(ev_kf_predict(prior, model, &mut predicted), EvStatus::Ok);
        let mut var = [0.0f64];
        assert_eq!(ev_belief_cov(predicted, var.as_mut_ptr(), 1), EvStatus::Ok);
        assert_relative_eq!(var[0], golden, epsilon = 1e-12);

        let y = [1.0f64];
        let mut updated = ptr::null_mut();
        assert_eq!(ev_kf_update(predicted, model, y.as_ptr(), &mut updated), EvStatus::Ok);
        let mut mean = [0.0f64];
        assert_eq!(ev_belief_mean(updated, mean.as_mut_ptr(), 1), EvStatus::Ok);
        assert_eq!(ev_belief_cov(updated, var.as_mut_ptr(), 1), EvStatus::Ok);
        // Gain is phi/(phi+1) = phi - 1 for the golden ratio.
        assert_relative_eq!(mean[0], golden / (golden + 1.0), epsilon = 1e-12);
        assert_relative_eq!(var[0], golden / (golden + 1.0), epsilon = 1e-12);

        // The event update with a transmission agrees with the standard one.
        let mut weighting = ptr::null_mut();
        assert_eq!(ev_weighting_isotropic(2.0, 1.0, 1, &mut weighting), EvStatus::Ok);
        let c = [0.25f64];
        let mut event_updated = ptr::null_mut();
        assert_eq!(
            ev_event_update(predicted, model, 1, y.as_ptr(), c.as_ptr(), weighting, &mut event_updated),
            EvStatus::Ok
        );
        let mut event_mean = [0.0f64];
        assert_eq!(ev_belief_mean(event_updated, event_mean.as_mut_ptr(), 1), EvStatus::Ok);
        assert_relative_eq!(event_mean[0], mean[0], epsilon = 1e-12);

        // Silence without the implicit value is a usage error.
        let mut rejected = ptr::null_mut();
        let status = ev_event_update(
            predicted,
            model,
            0,
            ptr::null(),
            ptr::null(),
            weighting,
            &mut rejected,
        );
        assert_eq!(status, EvStatus::InvalidArgument);

        // Silent update: variance shrinks relative to the prediction but
        // stays above the standard update's.
        let mut silent = ptr::null_mut();
        assert_eq!(
            ev_event_update(predicted, model, 0, ptr::null(), c.as_ptr(), weighting, &mut silent),
            EvStatus::Ok
        );
        let mut silent_var = [0.0f64];
        assert_eq!(ev_belief_cov(silent, silent_var.as_mut_ptr(), 1), EvStatus::Ok);
        assert!(silent_var[0] < golden);
        assert!(silent_var[0] > var[0]);

        ev_belief_free(silent);
        ev_belief_free(event_updated);
        ev_belief_free(updated);
        ev_belief_free(predicted);
        ev_belief_free(prior);
        ev_weighting_free(weighting);
        ev_model_free(model);
    }
}

#[test]
fn sampler_tracks_the_closed_form_on_transmissions() {
    unsafe {
        let model = scalar_model();
        let initial = belief(1, &[0.0], &[1.0]);
        let mut weighting = ptr::null_mut();
        assert_eq!(ev_weighting_isotropic(2.0, 1.0, 1, &mut weighting), EvStatus::Ok);

        let mut sampler = ptr::null_mut();
        assert_eq!(
            ev_sampler_new(initial, 400, 5, 100, 42, &mut sampler),
            EvStatus::Ok
        );

        // A transmission collapses the sampler to the exact filter update,
        // so the result is deterministic despite the random stream.
        let y = [0.8f64];
        assert_eq!(
            ev_sampler_step(sampler, model, 1, y.as_ptr(), ptr::null(), weighting),
            EvStatus::Ok
        );
        let mut sampled = ptr::null_mut();
        assert_eq!(ev_sampler_belief(sampler, &mut sampled), EvStatus::Ok);

        let mut predicted = ptr::null_mut();
        assert_eq!(ev_kf_predict(initial, model, &mut predicted), EvStatus::Ok);
        let mut updated = ptr::null_mut();
        assert_eq!(ev_kf_update(predicted, model, y.as_ptr(), &mut updated), EvStatus::Ok);

        let (mut a, mut b) = ([0.0f64], [0.0f64]);
        assert_eq!(ev_belief_mean(sampled, a.as_mut_ptr(), 1), EvStatus::Ok);
        assert_eq!(ev_belief_mean(updated, b.as_mut_ptr(), 1), EvStatus::Ok);
        assert_relative_eq!(a[0], b[0], epsilon = 1e-12);

        // A silent step keeps a valid belief: finite mean, positive variance.
        let c = [0.0f64];
        assert_eq!(
            ev_sampler_step(sampler, model, 0, ptr::null(), c.as_ptr(), weighting),
            EvStatus::Ok
        );
        ev_belief_free(sampled);
        assert_eq!(ev_sampler_belief(sampler, &mut sampled), EvStatus::Ok);
        let mut var = [0.0f64];
        assert_eq!(ev_belief_cov(sampled, var.as_mut_ptr(), 1), EvStatus::Ok);
        assert!(var[0].is_finite() && var[0] > 0.0);

        // Starvation surfaces as its own status.
        let mut starved = ptr::null_mut();
        assert_eq!(
            ev_sampler_new(initial, 400, 5, 1, 42, &mut starved),
            EvStatus::Ok
        );
        let mut tight = ptr::null_mut();
        assert_eq!(ev_weighting_isotropic(2.0, 1e-9, 1, &mut tight), EvStatus::Ok);
        let far = [50.0f64];
        let status = ev_sampler_step(starved, model, 0, ptr::null(), far.as_ptr(), tight);
        assert_eq!(status, EvStatus::Starved);
        assert!(last_error().contains("starved"), "{}", last_error());

        ev_sampler_free(starved);
        ev_weighting_free(tight);
        ev_belief_free(sampled);
        ev_belief_free(updated);
        ev_belief_free(predicted);
        ev_belief_free(initial);
        ev_sampler_free(sampler);
        ev_weighting_free(weighting);
        ev_model_free(model);
    }
}
