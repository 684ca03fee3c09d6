//! Stock receiver profiles.
//!
//! The two builds share the transmitter, channel emulation, detectors and
//! Z path; they differ in the X-path interferometer and its
//! stabilization. Loss, extinction, gate and stabilization values were
//! fitted once against the reference operating points listed in the
//! README (sifted-rate, error-rate and key-rate anchors) and ship as the
//! defaults below; every one of them can be overridden in a run
//! configuration.

use crate::link::{ChannelModel, DetectorModel, LinkModel, ReceiverModel, ReceiverVariant};

/// Receiver build selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Pic,
    FiberPll,
}

/// Detector stack shared by every channel.
pub fn detector() -> DetectorModel {
    DetectorModel {
        efficiency: 0.93,
        dark_rate_hz: 400.0,
        jitter_fwhm_ps: 40.0,
        gate_width_ps: 150.0,
    }
}

/// Integrated-interferometer receiver.
pub fn pic_receiver() -> ReceiverModel {
    ReceiverModel {
        variant: ReceiverVariant::Pic {
            residual_visibility_jitter: 0.002,
        },
        z_path_loss_db: 4.2,
        imzi_insertion_loss_db: 2.75,
        visibility: 0.96,
    }
}

/// Fiber-interferometer receiver with phase-locked-loop stabilization.
pub fn fiber_receiver() -> ReceiverModel {
    ReceiverModel {
        variant: ReceiverVariant::FiberPll {
            pll_noise_rate_hz: 125.0,
            drift_std_rad_per_sqrt_hour: 0.8,
            recalibration_interval_s: 300.0,
            recalibration_dead_time_s: 360.0,
        },
        z_path_loss_db: 4.2,
        imzi_insertion_loss_db: 3.5,
        visibility: 0.94,
    }
}

pub fn receiver(variant: Variant) -> ReceiverModel {
    match variant {
        Variant::Pic => pic_receiver(),
        Variant::FiberPll => fiber_receiver(),
    }
}

/// Full link at a given channel attenuation.
pub fn link(variant: Variant, attenuation_db: f64) -> LinkModel {
    LinkModel {
        channel: ChannelModel::new(attenuation_db),
        receiver: receiver(variant),
        detector: detector(),
        extinction_error: 0.005,
    }
}
