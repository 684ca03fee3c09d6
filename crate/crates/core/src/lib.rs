//! Simulation and analysis toolkit for a three-state time-bin BB84 link
//! with a one-decoy intensity scheme.
//!
//! The crate covers the full chain from transmitter model to secret key:
//!
//! * [`protocol`] — state alphabet, timing grid, decoy scheme and the
//!   pseudorandom emission pattern;
//! * [`link`] — channel/receiver/detector models, analytic count
//!   statistics, Monte Carlo block simulation with optional time-tag
//!   emission, and interferometer drift series;
//! * [`timetag`] — tag stream formats, pattern alignment, gate
//!   classification, sifting and rolling error rates;
//! * [`finitekey`] — one-decoy statistical bounds, the finite-block
//!   secret-key-length bound, rate sweeps and intensity optimization;
//! * [`profile`] — calibrated stock profiles for the integrated and
//!   fiber receiver builds.
//!
//! Everything is deterministic given a root seed; sub-seeds for the
//! independent random streams are derived in [`seed`].

pub mod finitekey;
pub mod link;
pub mod profile;
pub mod protocol;
pub mod seed;
pub mod timetag;

pub use finitekey::{
    analyze_block, decoy_bounds, secret_key_length, skr_vs_attenuation, DecoyBounds, KeyRateReport,
    SecurityParams,
};
pub use link::{
    drift_series, expected_counts, simulate_block, simulate_block_with_tags, ChannelModel,
    DetectorModel, LinkModel, ObservedCounts, ReceiverModel, ReceiverVariant,
};
pub use protocol::{
    generate_pattern, EmissionPattern, IntensityClass, ProtocolConfig, StateSymbol, TimingGrid,
};
pub use timetag::{SyncModel, TimeTag};
