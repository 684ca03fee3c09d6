//! Protocol definition: state alphabet, timing grid, decoy intensities and
//! the transmitter's pseudorandom emission pattern.
//!
//! The protocol sends three states. Two Z-basis states carry the key bits
//! and occupy a single time bin each; the only X-basis state is the equal
//! superposition of the two bins and is used exclusively for security
//! monitoring. Pulse intensity is switched at random between a signal and
//! a decoy level so that photon-number statistics can be bounded per
//! intensity class downstream.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

/// Configuration validation failure.
#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("probability `{name}` = {value} must lie strictly inside (0, 1)")]
    ProbabilityRange { name: &'static str, value: f64 },
    #[error("decoy intensities must satisfy 0 < mu2 < mu1, got mu1 = {mu1}, mu2 = {mu2}")]
    IntensityOrdering { mu1: f64, mu2: f64 },
    #[error("timing grid inconsistent: {0}")]
    Timing(String),
    #[error("{name} = {value} out of range: {constraint}")]
    Range {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
}

fn check_probability(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(ConfigError::ProbabilityRange { name, value })
    }
}

/// One of the three transmitted quantum states.
///
/// There is deliberately no `X1`: the second X-basis state is never
/// produced in this protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateSymbol {
    /// Photon in the early bin; key bit 0.
    Z0,
    /// Photon in the late bin; key bit 1.
    Z1,
    /// Equal superposition of early and late with relative phase 0.
    X0,
}

impl StateSymbol {
    /// Basis the symbol was prepared in.
    pub fn basis(self) -> Basis {
        match self {
            StateSymbol::Z0 | StateSymbol::Z1 => Basis::Z,
            StateSymbol::X0 => Basis::X,
        }
    }
}

/// Measurement/preparation basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

/// Intensity class of a pulse. The mean photon numbers live in
/// [`DecoyIntensities`]; the class is just the label carried per state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntensityClass {
    Signal,
    Decoy,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 2] = [IntensityClass::Signal, IntensityClass::Decoy];
}

/// The two-level decoy scheme: mean photon numbers and the probability of
/// emitting the signal level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyIntensities {
    /// Signal mean photon number (mu1).
    pub mu1: f64,
    /// Decoy mean photon number (mu2).
    pub mu2: f64,
    /// Probability that a state is emitted at the signal level.
    pub p_mu1: f64,
}

impl DecoyIntensities {
    pub fn validate(&self) -> Result<(), ConfigError> {
        // Strict ordering keeps the one-decoy bound denominators (mu1 - mu2)
        // away from zero.
        if !(self.mu1.is_finite() && self.mu2.is_finite() && 0.0 < self.mu2 && self.mu2 < self.mu1)
        {
            return Err(ConfigError::IntensityOrdering {
                mu1: self.mu1,
                mu2: self.mu2,
            });
        }
        check_probability("p_mu1", self.p_mu1)
    }

    /// Mean photon number of an intensity class.
    pub fn mean_photon(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.mu1,
            IntensityClass::Decoy => self.mu2,
        }
    }

    /// Emission probability of an intensity class.
    pub fn probability(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.p_mu1,
            IntensityClass::Decoy => 1.0 - self.p_mu1,
        }
    }
}

/// Temporal layout of the transmitted stream.
///
/// All intervals are integer picoseconds so that time-tag arithmetic over
/// multi-hour streams stays exact; `u64` picoseconds cover ~213 days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingGrid {
    /// Duration of one quantum state (early bin + late bin + gap).
    pub state_period_ps: u64,
    /// Delay between the centers of the early and late bins.
    pub bin_delay_ps: u64,
    /// Gap between the late bin of a state and the early bin of the next.
    pub inter_state_gap_ps: u64,
    /// Nominal state emission rate in states per second.
    pub state_rate_hz: f64,
    /// Number of states in one repeating frame of the pattern.
    pub pattern_length: usize,
    /// Frame repetition rate in frames per second.
    pub frame_rate_hz: f64,
}

impl Default for TimingGrid {
    fn default() -> Self {
        TimingGrid {
            state_period_ps: 1_680,
            bin_delay_ps: 800,
            inter_state_gap_ps: 880,
            state_rate_hz: 595.0e6,
            pattern_length: 4_095,
            frame_rate_hz: 145_358.0,
        }
    }
}

impl TimingGrid {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.state_period_ps == 0 || self.pattern_length == 0 {
            return Err(ConfigError::Timing(
                "state period and pattern length must be positive".into(),
            ));
        }
        if self.bin_delay_ps >= self.state_period_ps {
            return Err(ConfigError::Timing(format!(
                "bin delay {} ps must be shorter than the state period {} ps",
                self.bin_delay_ps, self.state_period_ps
            )));
        }
        let implied = self.pattern_length as f64 * self.frame_rate_hz;
        let rel = (implied - self.state_rate_hz).abs() / self.state_rate_hz;
        if rel > 1e-3 {
            return Err(ConfigError::Timing(format!(
                "pattern_length x frame_rate = {implied:.3e} deviates from the state rate \
                 {:.3e} by {:.2e} (limit 1e-3)",
                self.state_rate_hz, rel
            )));
        }
        Ok(())
    }

    /// Duration of one frame on the picosecond grid.
    pub fn frame_period_ps(&self) -> u64 {
        self.state_period_ps * self.pattern_length as u64
    }

    /// Center of the early bin within a state, on the ps grid.
    pub fn early_center_ps(&self) -> u64 {
        (self.state_period_ps - self.bin_delay_ps) / 2
    }

    /// Center of the late bin within a state, on the ps grid. This is also
    /// the center of the interfering (central) slot on the X path, where
    /// the delayed early pulse overlaps the direct late pulse.
    pub fn late_center_ps(&self) -> u64 {
        self.early_center_ps() + self.bin_delay_ps
    }
}

/// All transmitter-side protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Probability that Alice prepares a Z-basis state.
    pub p_z_alice: f64,
    /// Fraction of Bob's detection events routed to the Z path.
    pub p_z_bob: f64,
    /// Decoy scheme (intensity levels and signal probability).
    pub intensities: DecoyIntensities,
    /// Temporal layout.
    pub timing: TimingGrid,
    /// Target number of Z-basis detections per analysis block.
    pub n_z_block: u64,
    /// Secrecy parameter.
    pub eps_sec: f64,
    /// Correctness parameter.
    pub eps_corr: f64,
    /// Error-correction inefficiency factor (>= 1).
    pub f_ec: f64,
    /// Carrier wavelength label in nm; bookkeeping only, the models do
    /// not depend on it.
    pub wavelength_nm: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            p_z_alice: 0.5,
            p_z_bob: 0.5,
            intensities: DecoyIntensities {
                mu1: 0.48,
                mu2: 0.12,
                p_mu1: 0.7,
            },
            timing: TimingGrid::default(),
            n_z_block: 10_000_000,
            eps_sec: 1e-12,
            eps_corr: 1e-12,
            f_ec: 1.16,
            wavelength_nm: 1_545.32,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_probability("p_z_alice", self.p_z_alice)?;
        check_probability("p_z_bob", self.p_z_bob)?;
        self.intensities.validate()?;
        self.timing.validate()?;
        check_probability("eps_sec", self.eps_sec)?;
        check_probability("eps_corr", self.eps_corr)?;
        if self.n_z_block == 0 {
            return Err(ConfigError::Range {
                name: "n_z_block",
                value: 0.0,
                constraint: "must be >= 1",
            });
        }
        if !(self.f_ec.is_finite() && self.f_ec >= 1.0) {
            return Err(ConfigError::Range {
                name: "f_ec",
                value: self.f_ec,
                constraint: "must be >= 1",
            });
        }
        Ok(())
    }

    /// Derived probability of an X-basis preparation.
    pub fn p_x_alice(&self) -> f64 {
        1.0 - self.p_z_alice
    }

    /// Derived probability of an X-basis measurement.
    pub fn p_x_bob(&self) -> f64 {
        1.0 - self.p_z_bob
    }

    /// Emission probability of a given symbol.
    pub fn symbol_probability(&self, symbol: StateSymbol) -> f64 {
        match symbol {
            StateSymbol::Z0 | StateSymbol::Z1 => self.p_z_alice / 2.0,
            StateSymbol::X0 => self.p_x_alice(),
        }
    }
}

/// The fixed per-frame emission sequence, replayed every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionPattern {
    entries: Vec<(StateSymbol, IntensityClass)>,
    seed: u64,
}

impl EmissionPattern {
    pub fn entries(&self) -> &[(StateSymbol, IntensityClass)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entry(&self, index: usize) -> (StateSymbol, IntensityClass) {
        self.entries[index]
    }

    /// Number of pattern slots in each intensity class.
    pub fn class_count(&self, class: IntensityClass) -> u64 {
        self.entries.iter().filter(|(_, c)| *c == class).count() as u64
    }
}

/// Draw the per-frame emission sequence for a configuration.
///
/// Each slot is sampled independently: `Z0` and `Z1` each with probability
/// `p_z_alice / 2`, `X0` with `1 - p_z_alice`; the intensity is `Signal`
/// with probability `p_mu1`. The draw is a pure function of
/// `(config, seed)`.
pub fn generate_pattern(
    config: &ProtocolConfig,
    seed: u64,
) -> Result<EmissionPattern, ConfigError> {
    config.validate()?;
    let mut rng = seed::stream_rng(seed, seed::PATTERN_STREAM);
    let half_z = config.p_z_alice / 2.0;
    let entries = (0..config.timing.pattern_length)
        .map(|_| {
            let u: f64 = rng.random();
            let symbol = if u < half_z {
                StateSymbol::Z0
            } else if u < config.p_z_alice {
                StateSymbol::Z1
            } else {
                StateSymbol::X0
            };
            let class = if rng.random::<f64>() < config.intensities.p_mu1 {
                IntensityClass::Signal
            } else {
                IntensityClass::Decoy
            };
            (symbol, class)
        })
        .collect();
    Ok(EmissionPattern { entries, seed })
}

/// Mean photon number emitted into each time bin for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinWaveform {
    pub early_mean: f64,
    pub late_mean: f64,
    /// Relative phase between the bins; `None` when only one bin is lit.
    pub relative_phase: Option<f64>,
}

/// Per-bin emission descriptor for a symbol at mean photon number `mu`.
///
/// The total mean photon number always equals `mu` exactly.
pub fn state_waveform(symbol: StateSymbol, mean_photon: f64) -> BinWaveform {
    match symbol {
        StateSymbol::Z0 => BinWaveform {
            early_mean: mean_photon,
            late_mean: 0.0,
            relative_phase: None,
        },
        StateSymbol::Z1 => BinWaveform {
            early_mean: 0.0,
            late_mean: mean_photon,
            relative_phase: None,
        },
        StateSymbol::X0 => BinWaveform {
            early_mean: mean_photon / 2.0,
            late_mean: mean_photon / 2.0,
            relative_phase: Some(0.0),
        },
    }
}

/// Probability that an emitted state carries `n` photons, marginalized over
/// the intensity classes: `tau_n = sum_k p_k e^{-mu_k} mu_k^n / n!`.
pub fn tau_n(config: &ProtocolConfig, n: u32) -> f64 {
    let iv = &config.intensities;
    IntensityClass::ALL
        .iter()
        .map(|&class| {
            let mu = iv.mean_photon(class);
            iv.probability(class) * poisson_pmf(mu, n)
        })
        .sum()
}

/// Poisson probability mass `e^{-mu} mu^n / n!`, computed in log space to
/// stay finite for large `n`.
pub(crate) fn poisson_pmf(mu: f64, n: u32) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    (nf * mu.ln() - mu - libm::lgamma(nf + 1.0)).exp()
}
