#![allow(dead_code)] // not every test binary uses every oracle field

//! Shared test oracles.
//!
//! The tagged sampler here re-implements the detection physics from
//! scratch — per-photon Bernoulli thinning of an explicit source photon
//! number — so the statistical bounds in the library are checked against
//! an independent route, not against the code they were derived from.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qkd_core::link::{LinkModel, ObservedCounts};
use qkd_core::protocol::ProtocolConfig;

/// Counts of one block along with ground-truth tallies by source photon
/// number.
pub struct TaggedBlock {
    pub counts: ObservedCounts,
    /// Z detections from emissions that carried zero photons.
    pub true_vacuum_z: u64,
    /// Z detections from emissions that carried exactly one photon.
    pub true_single_z: u64,
}

/// Simulate `n_states` states with the source photon number of every
/// emission exposed.
pub fn tagged_block(
    config: &ProtocolConfig,
    link: &LinkModel,
    seed: u64,
    n_states: u64,
) -> TaggedBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let iv = &config.intensities;
    let det = &link.detector;

    let ch_loss = 10f64.powf(-link.channel.attenuation_db / 10.0);
    let z_photon = ch_loss
        * 10f64.powf(-link.receiver.z_path_loss_db / 10.0)
        * config.p_z_bob
        * det.efficiency
        * det.jitter_gate_acceptance();
    // Per-photon probability of reaching the interfering slot of the X
    // interferometer (half the light exits in satellite slots).
    let x_photon = ch_loss
        * 10f64.powf(-link.receiver.imzi_insertion_loss_db / 10.0)
        * (1.0 - config.p_z_bob)
        * det.efficiency
        * det.jitter_gate_acceptance()
        * 0.5;
    let p_dark = det.dark_per_gate();
    let p_x_bg = 1.0
        - (1.0 - p_dark)
            * (1.0 - link.receiver.pll_noise_rate_hz() * (2 * det.half_gate_ps()) as f64 * 1e-12);
    let vis = link.receiver.visibility;
    let e_ext = link.extinction_error;

    let mut counts = ObservedCounts::default();
    let mut true_vacuum_z = 0u64;
    let mut true_single_z = 0u64;

    let sample_photons = |rng: &mut ChaCha8Rng, mu: f64| -> u32 {
        // Inverse-CDF Poisson sampling.
        let u: f64 = rng.random();
        let mut acc = (-mu).exp();
        let mut p = acc;
        let mut k = 0u32;
        while u > acc && k < 200 {
            k += 1;
            p *= mu / k as f64;
            acc += p;
        }
        k
    };

    for _ in 0..n_states {
        let is_z = rng.random::<f64>() < config.p_z_alice;
        let z0 = is_z && rng.random::<f64>() < 0.5;
        let signal = rng.random::<f64>() < iv.p_mu1;
        let mu = if signal { iv.mu1 } else { iv.mu2 };
        if signal {
            counts.sent_mu1 += 1.0;
        } else {
            counts.sent_mu2 += 1.0;
        }
        let photons = sample_photons(&mut rng, mu);

        if is_z {
            let mut correct_click = false;
            let mut wrong_click = false;
            for _ in 0..photons {
                if rng.random::<f64>() < z_photon {
                    if rng.random::<f64>() < e_ext {
                        wrong_click = true;
                    } else {
                        correct_click = true;
                    }
                }
            }
            let dark_early = rng.random::<f64>() < p_dark;
            let dark_late = rng.random::<f64>() < p_dark;
            let early = dark_early || if z0 { correct_click } else { wrong_click };
            let late = dark_late || if z0 { wrong_click } else { correct_click };
            if early || late {
                // Double clicks resolve to the early bin, as in the
                // receiver's sifting rule.
                let error = if early { !z0 } else { z0 };
                if signal {
                    counts.n_z_mu1 += 1.0;
                    counts.m_z_mu1 += error as u64 as f64;
                } else {
                    counts.n_z_mu2 += 1.0;
                    counts.m_z_mu2 += error as u64 as f64;
                }
                match photons {
                    0 => true_vacuum_z += 1,
                    1 => true_single_z += 1,
                    _ => {}
                }
            }
        } else {
            let mut click_a = false;
            let mut click_b = false;
            for _ in 0..photons {
                if rng.random::<f64>() < x_photon {
                    if rng.random::<f64>() < (1.0 + vis) / 2.0 {
                        click_a = true;
                    } else {
                        click_b = true;
                    }
                }
            }
            click_a |= rng.random::<f64>() < p_x_bg;
            click_b |= rng.random::<f64>() < p_x_bg;
            if click_a || click_b {
                let error = click_b && !click_a;
                if signal {
                    counts.n_x_mu1 += 1.0;
                    counts.m_x_mu1 += error as u64 as f64;
                } else {
                    counts.n_x_mu2 += 1.0;
                    counts.m_x_mu2 += error as u64 as f64;
                }
            }
        }
    }

    counts.duration_s = n_states as f64 / config.timing.state_rate_hz;
    TaggedBlock {
        counts,
        true_vacuum_z,
        true_single_z,
    }
}
