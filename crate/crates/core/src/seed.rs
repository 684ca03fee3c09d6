//! Root-seed handling and per-subsystem sub-seed derivation.
//!
//! Every run is driven by a single root seed. Subsystems that need their
//! own random stream (pattern generation, detection sampling, drift, ...)
//! derive a sub-seed as `derive_seed(root, label)` so that adding draws to
//! one stream never perturbs another. The derivation is a SplitMix64 mix
//! of the root seed xored with an FNV-1a hash of the label, which keeps it
//! stable across platforms and releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sub-seed label for the transmitter pattern stream.
pub const PATTERN_STREAM: &str = "pattern";
/// Sub-seed label for the sifting-relevant detection stream.
pub const DETECT_STREAM: &str = "detect";
/// Sub-seed label for cross-basis and out-of-gate events (tag mode only).
pub const AUX_STREAM: &str = "aux";
/// Sub-seed label for interferometer drift sampling.
pub const DRIFT_STREAM: &str = "drift";

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// SplitMix64 finalizer; full-period mixing of a 64-bit word.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the sub-seed for `label` from a root seed.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    splitmix64(root ^ fnv1a64(label.as_bytes()))
}

/// Deterministic RNG for a derived sub-seed.
pub fn stream_rng(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label))
}
