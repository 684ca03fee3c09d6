//! Refit the stock receiver profiles and print their operating points.
//!
//! Run after touching the count or bound models:
//!
//! ```text
//! cargo run --release -p qkd-core --example calibrate
//! ```
//!
//! The search keeps the published hardware figures fixed (detector stack,
//! interferometer insertion losses, intensities) and fits only the
//! quantities no datasheet pins down: the Z-path excess loss and the
//! stabilization leak rate of the fiber build. Targets are the reference
//! operating points listed in the README. Paste the resulting values into
//! `profile.rs` when they move.

use qkd_core::finitekey::skr_vs_attenuation;
use qkd_core::link::{z_detection_rate_hz, LinkModel, ReceiverVariant};
use qkd_core::profile;
use qkd_core::protocol::ProtocolConfig;

const MAX_BLOCK_S: f64 = 86_400.0;

#[derive(Clone, Copy)]
struct FiberFit {
    pll_noise_rate_hz: f64,
    recalibration_dead_time_s: f64,
}

fn fiber_link(z_loss: f64, fit: FiberFit, att: f64) -> LinkModel {
    let mut link = profile::link(profile::Variant::FiberPll, att);
    link.receiver.z_path_loss_db = z_loss;
    if let ReceiverVariant::FiberPll {
        ref mut pll_noise_rate_hz,
        ref mut recalibration_dead_time_s,
        ..
    } = link.receiver.variant
    {
        *pll_noise_rate_hz = fit.pll_noise_rate_hz;
        *recalibration_dead_time_s = fit.recalibration_dead_time_s;
    }
    link
}

fn skr(config: &ProtocolConfig, link: &LinkModel, att: f64) -> f64 {
    skr_vs_attenuation(config, link, &[att], MAX_BLOCK_S)[0].skr_bps
}

fn main() {
    let config = ProtocolConfig::default();

    // Z-path excess loss: hit the long-haul key-rate anchor (12.2 bps at
    // 45 dB) while staying inside the sifted-rate band.
    let mut best_z = (f64::INFINITY, 0.0);
    let mut z_loss = 2.0;
    while z_loss <= 5.5 {
        let mut link = profile::link(profile::Variant::Pic, 45.0);
        link.receiver.z_path_loss_db = z_loss;
        let miss = (skr(&config, &link, 45.0) - 12.2).abs();
        if miss < best_z.0 {
            best_z = (miss, z_loss);
        }
        z_loss += 0.01;
    }
    let z_loss = best_z.1;

    // Fiber build: joint fit of the stabilization leak rate and the
    // recalibration dead time against three anchors at once — 110 bps at
    // 40 dB, no key at 45 dB, and at least a 2.2x rate disadvantage at
    // 10 dB (with margin).
    let pic10 = {
        let mut link = profile::link(profile::Variant::Pic, 10.0);
        link.receiver.z_path_loss_db = z_loss;
        skr(&config, &link, 10.0)
    };
    let mut best_fit = (
        f64::INFINITY,
        FiberFit {
            pll_noise_rate_hz: 0.0,
            recalibration_dead_time_s: 300.0,
        },
    );
    for dead in [300.0, 330.0, 360.0, 390.0, 420.0, 450.0] {
        let mut pll = 0.0;
        while pll <= 2_500.0 {
            let fit = FiberFit {
                pll_noise_rate_hz: pll,
                recalibration_dead_time_s: dead,
            };
            let at40 = skr(&config, &fiber_link(z_loss, fit, 40.0), 40.0);
            let at45 = skr(&config, &fiber_link(z_loss, fit, 45.0), 45.0);
            let ratio = pic10 / skr(&config, &fiber_link(z_loss, fit, 10.0), 10.0);
            let ok = at45 == 0.0 && ratio >= 2.35;
            let miss = (at40 - 110.0).abs();
            if ok && miss < best_fit.0 {
                best_fit = (miss, fit);
            }
            pll += 25.0;
        }
    }
    let fit = best_fit.1;

    println!("fitted parameters:");
    println!("  z_path_loss_db              = {z_loss:.2}");
    println!(
        "  pll_noise_rate_hz           = {:.0}",
        fit.pll_noise_rate_hz
    );
    println!(
        "  recalibration_dead_time_s   = {:.0}",
        fit.recalibration_dead_time_s
    );
    println!();

    let mut pic45 = profile::link(profile::Variant::Pic, 45.0);
    pic45.receiver.z_path_loss_db = z_loss;
    println!("operating points at those values:");
    println!(
        "  Z sifted rate @45 dB    {:8.1} Hz   (band 598.5..1111.5)",
        z_detection_rate_hz(&config, &pic45)
    );
    for att in [45.0, 40.0, 10.0] {
        let mut pic = profile::link(profile::Variant::Pic, att);
        pic.receiver.z_path_loss_db = z_loss;
        println!(
            "  SKR pic   @{att:4.0} dB   {:12.1} bps | fiber {:12.1} bps",
            skr(&config, &pic, att),
            skr(&config, &fiber_link(z_loss, fit, att), att),
        );
    }
    let ratio = pic10 / skr(&config, &fiber_link(z_loss, fit, 10.0), 10.0);
    println!("  pic/fiber ratio @10 dB  {ratio:8.2}    (needs >= 2.2)");
}
