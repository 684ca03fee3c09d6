//! Channel, receiver and detector models, with analytic count statistics.
//!
//! Two receiver builds are modeled behind one interface. The integrated
//! interferometer needs no active stabilization and adds no background
//! beyond detector dark counts. The fiber interferometer is phase-locked
//! against a counter-propagating monitor signal; the monitor leaks a
//! constant background rate onto the X-path detectors and the lock
//! periodically recalibrates, pausing acquisition.
//!
//! The X path decodes phase with an imbalanced interferometer whose delay
//! arm matches the bin spacing, so only the central of the three output
//! slots interferes; a fixed factor 1/2 of the X-path light is therefore
//! post-selected into the measurement gate.

mod drift;
mod sim;

pub use drift::{drift_series, gap_count, DriftSample};
pub use sim::{acquisition_duration_s, simulate_block, simulate_block_with_tags};

use serde::{Deserialize, Serialize};

use crate::protocol::{
    Basis, ConfigError, IntensityClass, ProtocolConfig, StateSymbol, TimingGrid,
};

/// Quantum-channel attenuation, emulating a spooled or attenuated fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub attenuation_db: f64,
}

impl ChannelModel {
    pub fn new(attenuation_db: f64) -> Self {
        ChannelModel { attenuation_db }
    }

    pub fn transmittance(&self) -> f64 {
        db_to_linear(self.attenuation_db)
    }
}

pub(crate) fn db_to_linear(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Receiver build variant with its stabilization-specific parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReceiverVariant {
    /// Integrated interferometer; passively stable.
    Pic {
        /// Standard deviation of the residual visibility fluctuation.
        residual_visibility_jitter: f64,
    },
    /// Fiber interferometer stabilized by a phase-locked loop.
    FiberPll {
        /// Background count rate the monitor signal leaks onto each
        /// X-path detector, independent of channel loss.
        pll_noise_rate_hz: f64,
        /// Phase random-walk scale, radians per square-root hour.
        drift_std_rad_per_sqrt_hour: f64,
        /// Live time between lock recalibrations.
        recalibration_interval_s: f64,
        /// Acquisition pause per recalibration.
        recalibration_dead_time_s: f64,
    },
}

/// Receiver losses and interference quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverModel {
    pub variant: ReceiverVariant,
    /// Excess loss of the direct Z path (connectors, splices, routing).
    pub z_path_loss_db: f64,
    /// Insertion loss of the X-path interferometer.
    pub imzi_insertion_loss_db: f64,
    /// Interference visibility of the central slot.
    pub visibility: f64,
}

impl ReceiverModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(ConfigError::Range {
                name: "visibility",
                value: self.visibility,
                constraint: "must lie in [0, 1]",
            });
        }
        for (name, v) in [
            ("z_path_loss_db", self.z_path_loss_db),
            ("imzi_insertion_loss_db", self.imzi_insertion_loss_db),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::Range {
                    name,
                    value: v,
                    constraint: "must be >= 0",
                });
            }
        }
        if let ReceiverVariant::FiberPll {
            pll_noise_rate_hz,
            drift_std_rad_per_sqrt_hour,
            recalibration_interval_s,
            recalibration_dead_time_s,
        } = self.variant
        {
            for (name, v, constraint) in [
                ("pll_noise_rate_hz", pll_noise_rate_hz, "must be >= 0"),
                (
                    "drift_std_rad_per_sqrt_hour",
                    drift_std_rad_per_sqrt_hour,
                    "must be >= 0",
                ),
                (
                    "recalibration_interval_s",
                    recalibration_interval_s,
                    "must be > 0",
                ),
                (
                    "recalibration_dead_time_s",
                    recalibration_dead_time_s,
                    "must be >= 0",
                ),
            ] {
                let ok = v.is_finite()
                    && if constraint.contains("> 0") {
                        v > 0.0
                    } else {
                        v >= 0.0
                    };
                if !ok {
                    return Err(ConfigError::Range {
                        name,
                        value: v,
                        constraint,
                    });
                }
            }
        }
        Ok(())
    }

    /// Background rate the stabilization leaks onto each X detector.
    /// Zero for the integrated build.
    pub fn pll_noise_rate_hz(&self) -> f64 {
        match self.variant {
            ReceiverVariant::Pic { .. } => 0.0,
            ReceiverVariant::FiberPll {
                pll_noise_rate_hz, ..
            } => pll_noise_rate_hz,
        }
    }

    /// Fraction of wall-clock time spent acquiring (not recalibrating).
    pub fn duty_cycle(&self) -> f64 {
        match self.variant {
            ReceiverVariant::Pic { .. } => 1.0,
            ReceiverVariant::FiberPll {
                recalibration_interval_s,
                recalibration_dead_time_s,
                ..
            } => recalibration_interval_s / (recalibration_interval_s + recalibration_dead_time_s),
        }
    }

    pub fn is_pic(&self) -> bool {
        matches!(self.variant, ReceiverVariant::Pic { .. })
    }
}

/// Single-photon detector parameters, shared by all channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub jitter_fwhm_ps: f64,
    /// Acceptance window centered on each expected arrival slot.
    pub gate_width_ps: f64,
}

impl DetectorModel {
    pub fn validate(&self, timing: &TimingGrid) -> Result<(), ConfigError> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(ConfigError::Range {
                name: "efficiency",
                value: self.efficiency,
                constraint: "must lie in (0, 1]",
            });
        }
        if !(self.dark_rate_hz.is_finite() && self.dark_rate_hz >= 0.0) {
            return Err(ConfigError::Range {
                name: "dark_rate_hz",
                value: self.dark_rate_hz,
                constraint: "must be >= 0",
            });
        }
        if !(self.jitter_fwhm_ps.is_finite() && self.jitter_fwhm_ps >= 0.0) {
            return Err(ConfigError::Range {
                name: "jitter_fwhm_ps",
                value: self.jitter_fwhm_ps,
                constraint: "must be >= 0",
            });
        }
        if !(self.gate_width_ps > 0.0 && self.gate_width_ps <= timing.bin_delay_ps as f64) {
            return Err(ConfigError::Range {
                name: "gate_width_ps",
                value: self.gate_width_ps,
                constraint: "must lie in (0, bin_delay_ps]",
            });
        }
        Ok(())
    }

    /// Half gate width, rounded onto the integer picosecond grid used for
    /// timestamps. Every gate-window decision in the crate goes through
    /// this value so the analytic engine, the Monte Carlo sampler and the
    /// tag classifier agree exactly.
    pub fn half_gate_ps(&self) -> i64 {
        (self.gate_width_ps / 2.0).round() as i64
    }

    /// Probability of a dark count inside one gate.
    pub fn dark_per_gate(&self) -> f64 {
        self.dark_rate_hz * (2 * self.half_gate_ps()) as f64 * 1e-12
    }

    /// Gaussian-jitter standard deviation in ps.
    pub fn jitter_sigma_ps(&self) -> f64 {
        // FWHM = 2 sqrt(2 ln 2) sigma
        self.jitter_fwhm_ps / (8.0 * core::f64::consts::LN_2).sqrt()
    }

    /// Probability that a detected photon's jittered timestamp stays
    /// inside its gate.
    pub fn jitter_gate_acceptance(&self) -> f64 {
        let sigma = self.jitter_sigma_ps();
        if sigma == 0.0 {
            return 1.0;
        }
        let half = self.half_gate_ps() as f64;
        libm::erf(half / (sigma * core::f64::consts::SQRT_2))
    }
}

/// Everything between Alice's output connector and the detection counts:
/// channel, receiver build, detectors, and the encoder's bin-extinction
/// error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub channel: ChannelModel,
    pub receiver: ReceiverModel,
    pub detector: DetectorModel,
    /// Probability that a Z-state photon is carved into the wrong bin.
    pub extinction_error: f64,
}

impl LinkModel {
    pub fn validate(&self, timing: &TimingGrid) -> Result<(), ConfigError> {
        if !self.channel.attenuation_db.is_finite() || self.channel.attenuation_db < 0.0 {
            return Err(ConfigError::Range {
                name: "attenuation_db",
                value: self.channel.attenuation_db,
                constraint: "must be >= 0",
            });
        }
        self.receiver.validate()?;
        self.detector.validate(timing)?;
        if !(0.0..0.5).contains(&self.extinction_error) {
            return Err(ConfigError::Range {
                name: "extinction_error",
                value: self.extinction_error,
                constraint: "must lie in [0, 0.5)",
            });
        }
        Ok(())
    }
}

/// End-to-end transmittance of one basis path, per unit mean photon
/// number: channel and receiver losses, the receiving beam splitter share,
/// and detector efficiency. The X path additionally carries the intrinsic
/// factor 1/2 for central-slot post-selection.
pub fn total_transmittance(link: &LinkModel, basis: Basis, p_z_bob: f64) -> f64 {
    let det = link.detector.efficiency;
    match basis {
        Basis::Z => {
            db_to_linear(link.channel.attenuation_db + link.receiver.z_path_loss_db) * p_z_bob * det
        }
        Basis::X => {
            db_to_linear(link.channel.attenuation_db + link.receiver.imzi_insertion_loss_db)
                * (1.0 - p_z_bob)
                * det
                * 0.5
        }
    }
}

/// Threshold-detector click probability for a weak coherent pulse:
/// `1 - (1 - p_dark) e^{-mu eta}`.
pub fn click_probability(mean_photon: f64, eta: f64, p_dark_gate: f64) -> f64 {
    1.0 - (1.0 - p_dark_gate) * (-mean_photon * eta).exp()
}

/// X-basis error rate implied by an interferometer visibility.
pub fn qber_x_from_visibility(vis: f64) -> f64 {
    (1.0 - vis) / 2.0
}

/// Per-basis, per-intensity detection and error counts for one block.
///
/// Monte Carlo fills integer values; the analytic engine fills
/// expectations. `duration_s` is wall-clock time including any
/// recalibration dead time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservedCounts {
    pub n_z_mu1: f64,
    pub m_z_mu1: f64,
    pub n_z_mu2: f64,
    pub m_z_mu2: f64,
    pub n_x_mu1: f64,
    pub m_x_mu1: f64,
    pub n_x_mu2: f64,
    pub m_x_mu2: f64,
    pub sent_mu1: f64,
    pub sent_mu2: f64,
    pub duration_s: f64,
}

impl ObservedCounts {
    pub fn n_z(&self) -> f64 {
        self.n_z_mu1 + self.n_z_mu2
    }

    pub fn m_z(&self) -> f64 {
        self.m_z_mu1 + self.m_z_mu2
    }

    pub fn n_x(&self) -> f64 {
        self.n_x_mu1 + self.n_x_mu2
    }

    pub fn m_x(&self) -> f64 {
        self.m_x_mu1 + self.m_x_mu2
    }

    pub fn detections(&self, basis: Basis, class: IntensityClass) -> f64 {
        match (basis, class) {
            (Basis::Z, IntensityClass::Signal) => self.n_z_mu1,
            (Basis::Z, IntensityClass::Decoy) => self.n_z_mu2,
            (Basis::X, IntensityClass::Signal) => self.n_x_mu1,
            (Basis::X, IntensityClass::Decoy) => self.n_x_mu2,
        }
    }

    pub fn errors(&self, basis: Basis, class: IntensityClass) -> f64 {
        match (basis, class) {
            (Basis::Z, IntensityClass::Signal) => self.m_z_mu1,
            (Basis::Z, IntensityClass::Decoy) => self.m_z_mu2,
            (Basis::X, IntensityClass::Signal) => self.m_x_mu1,
            (Basis::X, IntensityClass::Decoy) => self.m_x_mu2,
        }
    }

    pub fn qber_z(&self) -> f64 {
        if self.n_z() > 0.0 {
            self.m_z() / self.n_z()
        } else {
            0.0
        }
    }

    pub fn qber_x(&self) -> f64 {
        if self.n_x() > 0.0 {
            self.m_x() / self.n_x()
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let cells = [
            ("z_mu1", self.n_z_mu1, self.m_z_mu1),
            ("z_mu2", self.n_z_mu2, self.m_z_mu2),
            ("x_mu1", self.n_x_mu1, self.m_x_mu1),
            ("x_mu2", self.n_x_mu2, self.m_x_mu2),
        ];
        for (_, n, m) in cells {
            if !(n >= 0.0 && m >= 0.0 && m <= n) {
                return Err(ConfigError::Range {
                    name: "counts",
                    value: m,
                    constraint: "0 <= errors <= detections per cell",
                });
            }
        }
        if !self.duration_s.is_finite() || self.duration_s <= 0.0 {
            return Err(ConfigError::Range {
                name: "duration_s",
                value: self.duration_s,
                constraint: "must be > 0",
            });
        }
        Ok(())
    }
}

/// Per-state click and error probabilities for every sifting-relevant
/// detector cell. Shared by the analytic engine and (in raw-mean form) by
/// the Monte Carlo sampler, so the two stay in lockstep by construction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StateProbabilities {
    /// Per class: probability a Z state yields a sifted detection
    /// (identical for Z0 and Z1 by symmetry).
    pub z_det: [f64; 2],
    /// Per class: error probability for a Z0 state. A double click is
    /// booked as early (the first bin in time), which is correct here.
    pub z_err_z0: [f64; 2],
    /// Per class: error probability for a Z1 state, where any early
    /// click is booked as an error.
    pub z_err_z1: [f64; 2],
    /// Per class: probability an X0 state yields a sifted detection.
    pub x_det: [f64; 2],
    /// Per class: probability an X0 state yields a sifted error.
    pub x_err: [f64; 2],
}

/// Raw per-unit-mu gains for each path (no jitter folding).
#[derive(Debug, Clone, Copy)]
pub(crate) struct PathGains {
    /// Detected mean per unit mu on the Z detector.
    pub z_unit: f64,
    /// Detected mean per unit mu entering the X interferometer path,
    /// before the output slots split it.
    pub x_unit: f64,
    pub p_dark: f64,
    /// Combined background probability per X gate (dark + stabilization
    /// leakage).
    pub x_background: f64,
    pub jitter_acceptance: f64,
}

pub(crate) fn path_gains(config: &ProtocolConfig, link: &LinkModel) -> PathGains {
    let det = &link.detector;
    let p_dark = det.dark_per_gate();
    let p_pll = link.receiver.pll_noise_rate_hz() * det.gate_width_ps * 1e-12;
    PathGains {
        z_unit: db_to_linear(link.channel.attenuation_db + link.receiver.z_path_loss_db)
            * config.p_z_bob
            * det.efficiency,
        x_unit: db_to_linear(link.channel.attenuation_db + link.receiver.imzi_insertion_loss_db)
            * config.p_x_bob()
            * det.efficiency,
        p_dark,
        x_background: 1.0 - (1.0 - p_dark) * (1.0 - p_pll),
        jitter_acceptance: det.jitter_gate_acceptance(),
    }
}

/// Mean detected photon numbers in the interfering slot of the two X
/// output ports for an X0 state: the port matching phase 0 takes
/// `(1 + v)/2` of the central-slot light, the other `(1 - v)/2`.
pub(crate) fn x_port_means(mu: f64, x_unit: f64, visibility: f64) -> (f64, f64) {
    let central = mu * x_unit / 2.0;
    (
        central * (1.0 + visibility) / 2.0,
        central * (1.0 - visibility) / 2.0,
    )
}

pub(crate) fn state_probabilities(config: &ProtocolConfig, link: &LinkModel) -> StateProbabilities {
    let gains = path_gains(config, link);
    let g = gains.jitter_acceptance;
    let e = link.extinction_error;
    let mut probs = StateProbabilities {
        z_det: [0.0; 2],
        z_err_z0: [0.0; 2],
        z_err_z1: [0.0; 2],
        x_det: [0.0; 2],
        x_err: [0.0; 2],
    };
    for (idx, class) in IntensityClass::ALL.into_iter().enumerate() {
        let mu = config.intensities.mean_photon(class);
        // Z path: for Z0 the early gate carries the intended light and
        // the late gate the extinction leakage; Z1 is the mirror image.
        // A double click is attributed to the early bin (it arrives
        // first), which is correct for Z0 and an error for Z1; averaged
        // over the two symbols this reproduces the unbiased random
        // assignment.
        let p_cor = click_probability(mu * (1.0 - e) * gains.z_unit * g, 1.0, gains.p_dark);
        let p_wr = click_probability(mu * e * gains.z_unit * g, 1.0, gains.p_dark);
        probs.z_det[idx] = 1.0 - (1.0 - p_cor) * (1.0 - p_wr);
        probs.z_err_z0[idx] = p_wr * (1.0 - p_cor);
        probs.z_err_z1[idx] = p_wr;
        // X path: both output ports gate the central slot; a double click
        // is attributed to the in-phase port.
        let (m_a, m_b) = x_port_means(mu, gains.x_unit * g, link.receiver.visibility);
        let p_a = click_probability(m_a, 1.0, gains.x_background);
        let p_b = click_probability(m_b, 1.0, gains.x_background);
        probs.x_det[idx] = 1.0 - (1.0 - p_a) * (1.0 - p_b);
        probs.x_err[idx] = p_b * (1.0 - p_a);
    }
    probs
}

/// Expected counts for `live_states` emitted states (no dead time),
/// marginalized over the symbol/intensity draw.
pub(crate) fn expected_counts_for_states(
    config: &ProtocolConfig,
    link: &LinkModel,
    live_states: f64,
    duration_s: f64,
) -> ObservedCounts {
    let probs = state_probabilities(config, link);
    let mut counts = ObservedCounts {
        duration_s,
        ..ObservedCounts::default()
    };
    for (idx, class) in IntensityClass::ALL.into_iter().enumerate() {
        let p_k = config.intensities.probability(class);
        let sent = live_states * p_k;
        let n_z = sent * config.p_z_alice * probs.z_det[idx];
        let m_z = sent * config.p_z_alice / 2.0 * (probs.z_err_z0[idx] + probs.z_err_z1[idx]);
        let n_x = sent * config.p_x_alice() * probs.x_det[idx];
        let m_x = sent * config.p_x_alice() * probs.x_err[idx];
        match class {
            IntensityClass::Signal => {
                counts.sent_mu1 = sent;
                counts.n_z_mu1 = n_z;
                counts.m_z_mu1 = m_z;
                counts.n_x_mu1 = n_x;
                counts.m_x_mu1 = m_x;
            }
            IntensityClass::Decoy => {
                counts.sent_mu2 = sent;
                counts.n_z_mu2 = n_z;
                counts.m_z_mu2 = m_z;
                counts.n_x_mu2 = n_x;
                counts.m_x_mu2 = m_x;
            }
        }
    }
    counts
}

/// Expected counts conditioned on one concrete emission pattern replayed
/// over `n_states` states. This is the right reference for Monte Carlo
/// blocks, whose per-cell statistics depend on the realized symbol mix of
/// the frame, not on its ensemble average.
pub fn expected_counts_for_emission(
    config: &ProtocolConfig,
    link: &LinkModel,
    pattern: &crate::protocol::EmissionPattern,
    n_states: u64,
    duration_s: f64,
) -> ObservedCounts {
    let probs = state_probabilities(config, link);
    // Realized (symbol, class) slot counts over full frames plus the
    // partial prefix, exactly as the simulator emits them.
    let plen = pattern.len() as u64;
    let full = n_states / plen;
    let rem = (n_states % plen) as usize;
    let mut slots = [[0u64; 2]; 3];
    for (i, &(symbol, class)) in pattern.entries().iter().enumerate() {
        let reps = full + ((i < rem) as u64);
        let s = match symbol {
            StateSymbol::Z0 => 0,
            StateSymbol::Z1 => 1,
            StateSymbol::X0 => 2,
        };
        slots[s][(class == IntensityClass::Decoy) as usize] += reps;
    }
    let mut counts = ObservedCounts {
        duration_s,
        ..ObservedCounts::default()
    };
    for (idx, class) in IntensityClass::ALL.into_iter().enumerate() {
        let z0 = slots[0][idx] as f64;
        let z1 = slots[1][idx] as f64;
        let x0 = slots[2][idx] as f64;
        let n_z = (z0 + z1) * probs.z_det[idx];
        let m_z = z0 * probs.z_err_z0[idx] + z1 * probs.z_err_z1[idx];
        let n_x = x0 * probs.x_det[idx];
        let m_x = x0 * probs.x_err[idx];
        let sent = z0 + z1 + x0;
        if class == IntensityClass::Signal {
            counts.sent_mu1 = sent;
            counts.n_z_mu1 = n_z;
            counts.m_z_mu1 = m_z;
            counts.n_x_mu1 = n_x;
            counts.m_x_mu1 = m_x;
        } else {
            counts.sent_mu2 = sent;
            counts.n_z_mu2 = n_z;
            counts.m_z_mu2 = m_z;
            counts.n_x_mu2 = n_x;
            counts.m_x_mu2 = m_x;
        }
    }
    counts
}

/// Expected counts accumulated over `duration_s` of wall-clock time.
///
/// For the fiber build the live fraction is the recalibration duty cycle;
/// the integrated build acquires continuously.
pub fn expected_counts(
    config: &ProtocolConfig,
    link: &LinkModel,
    duration_s: f64,
) -> ObservedCounts {
    let live_states = duration_s * config.timing.state_rate_hz * link.receiver.duty_cycle();
    expected_counts_for_states(config, link, live_states, duration_s)
}

/// Expected sifted Z-basis detection rate per wall-clock second.
pub fn z_detection_rate_hz(config: &ProtocolConfig, link: &LinkModel) -> f64 {
    let probs = state_probabilities(config, link);
    let per_state: f64 = IntensityClass::ALL
        .into_iter()
        .enumerate()
        .map(|(idx, class)| config.intensities.probability(class) * probs.z_det[idx])
        .sum();
    config.timing.state_rate_hz * link.receiver.duty_cycle() * config.p_z_alice * per_state
}

/// Wall-clock duration needed to accumulate `n_z_target` Z detections.
pub fn duration_for_block(config: &ProtocolConfig, link: &LinkModel, n_z_target: f64) -> f64 {
    n_z_target / z_detection_rate_hz(config, link)
}

/// Number of emitted states expected to yield `n_z_target` Z detections.
pub fn states_for_block(config: &ProtocolConfig, link: &LinkModel, n_z_target: f64) -> u64 {
    let probs = state_probabilities(config, link);
    let per_state: f64 = IntensityClass::ALL
        .into_iter()
        .enumerate()
        .map(|(idx, class)| config.intensities.probability(class) * probs.z_det[idx])
        .sum();
    (n_z_target / (config.p_z_alice * per_state)).ceil() as u64
}

impl StateSymbol {
    /// Mean photon number arriving in the (early, late) Z-detector gates
    /// for this symbol, given per-unit-mu gain and the extinction error.
    pub(crate) fn z_gate_means(self, mu: f64, z_unit: f64, extinction: f64) -> (f64, f64) {
        match self {
            StateSymbol::Z0 => (mu * (1.0 - extinction) * z_unit, mu * extinction * z_unit),
            StateSymbol::Z1 => (mu * extinction * z_unit, mu * (1.0 - extinction) * z_unit),
            StateSymbol::X0 => (mu * z_unit / 2.0, mu * z_unit / 2.0),
        }
    }
}
