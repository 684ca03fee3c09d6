//! Interferometer stability over time.
//!
//! The integrated receiver holds its visibility passively; samples jitter
//! around the nominal value. The fiber receiver's locked phase performs a
//! random walk between recalibrations; each recalibration resets the
//! phase and pauses sampling for the dead time, leaving holes in the
//! series timestamps.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::seed;

use super::{qber_x_from_visibility, ReceiverModel, ReceiverVariant};

/// One stability sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSample {
    pub time_s: f64,
    pub visibility: f64,
    pub qber_x: f64,
}

/// Visibility and implied X-basis error rate over `duration_s`, sampled
/// every `sample_interval_s` of live time.
pub fn drift_series(
    receiver: &ReceiverModel,
    duration_s: f64,
    sample_interval_s: f64,
    seed: u64,
) -> Vec<DriftSample> {
    assert!(duration_s > 0.0 && sample_interval_s > 0.0);
    let mut rng = seed::stream_rng(seed, seed::DRIFT_STREAM);
    match receiver.variant {
        ReceiverVariant::Pic {
            residual_visibility_jitter,
        } => pic_series(
            receiver.visibility,
            residual_visibility_jitter,
            duration_s,
            sample_interval_s,
            &mut rng,
        ),
        ReceiverVariant::FiberPll {
            drift_std_rad_per_sqrt_hour,
            recalibration_interval_s,
            recalibration_dead_time_s,
            ..
        } => fiber_series(
            receiver.visibility,
            drift_std_rad_per_sqrt_hour,
            recalibration_interval_s,
            recalibration_dead_time_s,
            duration_s,
            sample_interval_s,
            &mut rng,
        ),
    }
}

fn sample(time_s: f64, visibility: f64) -> DriftSample {
    let vis = visibility.clamp(0.0, 1.0);
    DriftSample {
        time_s,
        visibility: vis,
        qber_x: qber_x_from_visibility(vis),
    }
}

fn pic_series(
    nominal: f64,
    jitter: f64,
    duration_s: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<DriftSample> {
    let noise = (jitter > 0.0).then(|| Normal::new(0.0, jitter).expect("finite jitter"));
    let mut out = Vec::new();
    let mut t = 0.0;
    while t < duration_s {
        let vis = nominal + noise.as_ref().map_or(0.0, |n| n.sample(rng));
        out.push(sample(t, vis));
        t += dt;
    }
    out
}

fn fiber_series(
    nominal: f64,
    drift_std: f64,
    interval_s: f64,
    dead_s: f64,
    duration_s: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<DriftSample> {
    let step = (drift_std > 0.0)
        .then(|| Normal::new(0.0, drift_std * (dt / 3600.0).sqrt()).expect("finite drift"));
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut phase = 0.0f64;
    while t < duration_s {
        let live_end = t + interval_s;
        while t < live_end.min(duration_s) {
            out.push(sample(t, nominal * phase.cos().abs()));
            phase += step.as_ref().map_or(0.0, |n| n.sample(rng));
            t += dt;
        }
        // Relock: the series goes dark for the dead time and the phase
        // error starts over from zero.
        t = live_end + dead_s;
        phase = 0.0;
    }
    out
}

/// Count holes in a series sampled nominally every `sample_interval_s`.
pub fn gap_count(series: &[DriftSample], sample_interval_s: f64) -> usize {
    series
        .windows(2)
        .filter(|w| w[1].time_s - w[0].time_s > 1.5 * sample_interval_s)
        .count()
}
