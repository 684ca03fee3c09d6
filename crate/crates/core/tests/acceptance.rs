//! Acceptance gate: every release criterion as one test, each printing a
//! PASS line with the measured values (visible with `--nocapture`).
//!
//! Tolerances are pinned here, in code. Reference operating points:
//! a sifted Z rate of ~855 Hz at 45 dB (one 1e7 block in 3 h 15 m), key
//! rates of 12.2 bps at 45 dB / 637.8 bps at 40 dB for the integrated
//! receiver and 110 bps at 40 dB for the fiber receiver (factor-2 bands),
//! a >= 2.2x rate advantage at 10 dB, and a 2% X-basis error rate at
//! 0.96 visibility.

mod util;

use std::io::Cursor;

use qkd_core::finitekey::{
    analyze_block, decoy_bounds, lambda_corr, lambda_sec, skr_vs_attenuation, SecurityParams,
};
use qkd_core::link::{
    drift_series, expected_counts_for_emission, gap_count, simulate_block,
    simulate_block_with_tags, states_for_block, z_detection_rate_hz, ReceiverVariant,
};
use qkd_core::profile::{self, Variant};
use qkd_core::protocol::{generate_pattern, ProtocolConfig};
use qkd_core::timetag::{
    accumulate_counts, classify, estimate_offset, read_tags, ChannelMap, StreamFormat,
    StreamHeader, SyncModel, TagWriter,
};

const MAX_BLOCK_S: f64 = 86_400.0;

#[test]
fn criterion_1_security_term_fidelity() {
    let l_sec = lambda_sec(1e-12);
    let l_corr = lambda_corr(1e-12);
    assert!(
        (l_sec - 264.666).abs() <= 1e-3,
        "lambda_sec = {l_sec}, want 264.666 +/- 1e-3"
    );
    assert!(
        (l_corr - 40.863).abs() <= 1e-3,
        "lambda_corr = {l_corr}, want 40.863 +/- 1e-3"
    );
    println!("criterion 1 (security-term fidelity): PASS  lambda_sec = {l_sec:.4}, lambda_corr = {l_corr:.4}");
}

#[test]
fn criterion_2_sifted_rate_anchor() {
    // 1e7 Z detections over 3 h 15 m corresponds to 854.7 Hz.
    let config = ProtocolConfig::default();
    let link = profile::link(Variant::Pic, 45.0);
    let rate = z_detection_rate_hz(&config, &link);
    let rel = (rate - 855.0) / 855.0;
    assert!(
        rel.abs() <= 0.30,
        "Z sifted rate at 45 dB = {rate:.1} Hz, outside 855 Hz +/- 30%"
    );
    println!(
        "criterion 2 (sifted-rate anchor): PASS  rate(45 dB) = {rate:.1} Hz ({:+.1}%)",
        rel * 100.0
    );
}

#[test]
fn criterion_3_headline_key_rates() {
    let config = ProtocolConfig::default();
    let pic = skr_vs_attenuation(
        &config,
        &profile::link(Variant::Pic, 0.0),
        &[40.0, 45.0],
        MAX_BLOCK_S,
    );
    let fiber = skr_vs_attenuation(
        &config,
        &profile::link(Variant::FiberPll, 0.0),
        &[40.0, 45.0],
        MAX_BLOCK_S,
    );
    let (pic40, pic45) = (pic[0].skr_bps, pic[1].skr_bps);
    let (fiber40, fiber45) = (fiber[0].skr_bps, fiber[1].skr_bps);
    let within_factor_2 = |value: f64, anchor: f64| value >= anchor / 2.0 && value <= anchor * 2.0;
    assert!(
        within_factor_2(pic45, 12.2),
        "integrated receiver at 45 dB: {pic45:.1} bps, want 12.2 within factor 2"
    );
    assert!(
        within_factor_2(pic40, 637.8),
        "integrated receiver at 40 dB: {pic40:.1} bps, want 637.8 within factor 2"
    );
    assert!(
        within_factor_2(fiber40, 110.0),
        "fiber receiver at 40 dB: {fiber40:.1} bps, want 110 within factor 2"
    );
    assert_eq!(
        fiber45, 0.0,
        "fiber receiver at 45 dB must yield no positive key, got {fiber45:.1} bps"
    );
    println!(
        "criterion 3 (headline key rates): PASS  pic 45 dB = {pic45:.1} bps, pic 40 dB = {pic40:.1} bps, \
         fiber 40 dB = {fiber40:.1} bps, fiber 45 dB = {fiber45:.1} bps"
    );
}

#[test]
fn criterion_4_relative_advantage_at_10_db() {
    let config = ProtocolConfig::default();
    let pic = skr_vs_attenuation(
        &config,
        &profile::link(Variant::Pic, 0.0),
        &[10.0],
        MAX_BLOCK_S,
    )[0]
    .skr_bps;
    let fiber = skr_vs_attenuation(
        &config,
        &profile::link(Variant::FiberPll, 0.0),
        &[10.0],
        MAX_BLOCK_S,
    )[0]
    .skr_bps;
    let ratio = pic / fiber;
    assert!(
        ratio >= 2.2,
        "rate ratio at 10 dB = {ratio:.2}, want >= 2.2"
    );
    println!("criterion 4 (relative advantage): PASS  pic/fiber at 10 dB = {ratio:.2}");
}

#[test]
fn criterion_5_monte_carlo_matches_analytic() {
    let config = ProtocolConfig::default();
    let n_states = 100_000_000u64;
    for (seed, att) in [(101u64, 10.0), (102, 30.0)] {
        let link = profile::link(Variant::Pic, att);
        let pattern = generate_pattern(&config, seed).unwrap();
        let sampled = simulate_block(&config, &link, seed, n_states);
        let expected = expected_counts_for_emission(&config, &link, &pattern, n_states, 1.0);
        for (name, got, want) in [
            ("n_z_mu1", sampled.n_z_mu1, expected.n_z_mu1),
            ("m_z_mu1", sampled.m_z_mu1, expected.m_z_mu1),
            ("n_z_mu2", sampled.n_z_mu2, expected.n_z_mu2),
            ("m_z_mu2", sampled.m_z_mu2, expected.m_z_mu2),
            ("n_x_mu1", sampled.n_x_mu1, expected.n_x_mu1),
            ("m_x_mu1", sampled.m_x_mu1, expected.m_x_mu1),
            ("n_x_mu2", sampled.n_x_mu2, expected.n_x_mu2),
            ("m_x_mu2", sampled.m_x_mu2, expected.m_x_mu2),
        ] {
            // 5 sigma with sigma = sqrt(expected); a +5 floor keeps the
            // bound meaningful for near-empty cells.
            let bound = 5.0 * want.sqrt() + 5.0;
            assert!(
                (got - want).abs() <= bound,
                "{att} dB {name}: sampled {got} vs expected {want:.1} (bound {bound:.1})"
            );
        }
        assert_eq!(sampled.sent_mu1, expected.sent_mu1);
        assert_eq!(sampled.sent_mu2, expected.sent_mu2);
    }
    println!(
        "criterion 5 (Monte Carlo vs analytic): PASS  all cells within 5 sigma at 10 and 30 dB"
    );
}

#[test]
fn criterion_6_decoy_bound_soundness() {
    // 500 tagged blocks of ~1e5 Z detections; the bounds may fail no more
    // than 1% of the time each.
    let config = ProtocolConfig::default();
    let mut link = profile::link(Variant::Pic, 0.0);
    link.receiver.z_path_loss_db = 0.0;
    let security = SecurityParams::from_config(&config);
    let n_states = states_for_block(&config, &link, 1e5);
    let blocks = 500;
    let mut single_violations = 0u32;
    let mut vacuum_lower_violations = 0u32;
    let mut vacuum_upper_violations = 0u32;
    for seed in 0..blocks {
        let block = util::tagged_block(&config, &link, 9_000 + seed as u64, n_states);
        let bounds = decoy_bounds(&block.counts, &config, &security).unwrap();
        if bounds.s_z1_l > block.true_single_z as f64 {
            single_violations += 1;
        }
        if bounds.s_z0_l > block.true_vacuum_z as f64 {
            vacuum_lower_violations += 1;
        }
        if bounds.s_z0_u < block.true_vacuum_z as f64 {
            vacuum_upper_violations += 1;
        }
    }
    let budget = blocks / 100;
    assert!(
        single_violations <= budget,
        "s_z1_l exceeded the true single-photon count in {single_violations}/{blocks} blocks"
    );
    assert!(
        vacuum_lower_violations <= budget,
        "s_z0_l exceeded the true vacuum count in {vacuum_lower_violations}/{blocks} blocks"
    );
    assert!(
        vacuum_upper_violations <= budget,
        "s_z0_u fell below the true vacuum count in {vacuum_upper_violations}/{blocks} blocks"
    );
    println!(
        "criterion 6 (decoy-bound soundness): PASS  violations over {blocks} blocks: \
         single {single_violations}, vacuum-lower {vacuum_lower_violations}, vacuum-upper {vacuum_upper_violations}"
    );
}

#[test]
fn criterion_7_pipeline_identity_and_qber() {
    let config = ProtocolConfig::default();
    let link = profile::link(Variant::Pic, 6.0);
    assert_eq!(link.receiver.visibility, 0.96);
    let seed = 4242u64;
    let n_states = 6_000_000u64;

    let direct = simulate_block(&config, &link, seed, n_states);

    // Emit the same block as a binary tag stream.
    let header = StreamHeader::new(ChannelMap::default().channel_count(), n_states);
    let mut writer = TagWriter::new(Vec::new(), StreamFormat::Binary, &header).unwrap();
    let tagged = simulate_block_with_tags(&config, &link, seed, n_states, &mut |tag| {
        writer.write(tag).unwrap();
    });
    assert_eq!(direct, tagged);
    let bytes = writer.finish().unwrap();

    // Parse, align, classify, accumulate.
    let (parsed_header, tags) = read_tags(Cursor::new(bytes)).unwrap();
    assert_eq!(parsed_header.states, Some(n_states));
    let pattern = generate_pattern(&config, seed).unwrap();
    let offset = estimate_offset(&tags, &pattern, &config.timing, &ChannelMap::default()).unwrap();
    let sync = SyncModel {
        frame_period_ps: config.timing.frame_period_ps(),
        offset_ps: offset,
        channel_map: ChannelMap::default(),
    };
    let classified = classify(
        &tags,
        &pattern,
        &sync,
        &config.timing,
        link.detector.half_gate_ps(),
    );
    let accumulated = accumulate_counts(&classified, &pattern, n_states, direct.duration_s);
    assert_eq!(
        accumulated, direct,
        "pipeline counts differ from count-mode output (offset estimate {offset})"
    );

    // X-basis error rate of the stream against the visibility mapping.
    let qber = accumulated.qber_x();
    let sigma = (0.02f64 * 0.98 / accumulated.n_x()).sqrt();
    assert!(
        (qber - 0.02).abs() <= 3.0 * sigma,
        "stream QBER_x = {qber:.5}, want 0.02 within 3 sigma = {:.5}",
        3.0 * sigma
    );
    println!(
        "criterion 7 (pipeline identity): PASS  counts identical, QBER_x = {qber:.4} vs 0.02 \
         (3 sigma = {:.4})",
        3.0 * sigma
    );
}

#[test]
fn criterion_8_stability_ordering_and_gaps() {
    // Equal nominal visibility; only the stabilization differs.
    let pic = profile::pic_receiver();
    let mut fiber = profile::fiber_receiver();
    fiber.visibility = pic.visibility;
    let duration = 5.0 * 3_600.0;
    let interval = 10.0;
    let pic_series = drift_series(&pic, duration, interval, 31);
    let fiber_series = drift_series(&fiber, duration, interval, 31);
    let mean = |s: &[qkd_core::link::DriftSample]| {
        s.iter().map(|x| x.qber_x).sum::<f64>() / s.len() as f64
    };
    let (pic_mean, fiber_mean) = (mean(&pic_series), mean(&fiber_series));
    assert!(
        fiber_mean > pic_mean,
        "fiber mean QBER_x {fiber_mean:.5} not above pic mean {pic_mean:.5}"
    );
    let gaps = gap_count(&fiber_series, interval);
    assert!(gaps >= 1, "expected at least one recalibration gap");
    assert_eq!(gap_count(&pic_series, interval), 0);
    println!(
        "criterion 8 (stability): PASS  mean QBER_x pic = {pic_mean:.4}, fiber = {fiber_mean:.4}, \
         fiber gaps = {gaps}"
    );
}

#[test]
fn criterion_9_monotonicity_suite() {
    use rand::Rng;
    let mut rng = qkd_core::seed::stream_rng(2_024, "monotonicity-suite");
    let mut checks = 0u32;
    for case in 0..100 {
        let mut config = ProtocolConfig::default();
        config.intensities.mu1 = rng.random_range(0.35..0.65);
        config.intensities.mu2 = rng.random_range(0.06..0.20);
        config.intensities.p_mu1 = rng.random_range(0.55..0.85);
        let variant = if case % 2 == 0 {
            Variant::Pic
        } else {
            Variant::FiberPll
        };
        let att = rng.random_range(0.0..36.0);
        let mut link = profile::link(variant, att);
        link.receiver.visibility = rng.random_range(0.90..0.995);
        link.receiver.z_path_loss_db = rng.random_range(1.0..5.0);
        link.detector.dark_rate_hz = rng.random_range(50.0..1_200.0);
        link.extinction_error = rng.random_range(0.002..0.012);
        if let ReceiverVariant::FiberPll {
            ref mut pll_noise_rate_hz,
            ..
        } = link.receiver.variant
        {
            *pll_noise_rate_hz = rng.random_range(0.0..2_000.0);
        }
        config.validate().unwrap();
        link.validate(&config.timing).unwrap();

        let skr = |link: &qkd_core::link::LinkModel, att: f64| {
            skr_vs_attenuation(&config, link, &[att], MAX_BLOCK_S)[0].skr_bps
        };
        let base = skr(&link, att);

        // Nonincreasing in attenuation.
        assert!(
            skr(&link, att + 3.0) <= base,
            "case {case}: SKR grew with attenuation"
        );
        // Nonincreasing in QBER_x (via reduced visibility).
        let mut worse_vis = link;
        worse_vis.receiver.visibility = (link.receiver.visibility - 0.03).max(0.0);
        assert!(
            skr(&worse_vis, att) <= base,
            "case {case}: SKR grew with QBER_x"
        );
        // Nonincreasing in dark rate.
        let mut more_dark = link;
        more_dark.detector.dark_rate_hz = link.detector.dark_rate_hz * 2.0;
        assert!(
            skr(&more_dark, att) <= base,
            "case {case}: SKR grew with dark rate"
        );
        checks += 3;
    }
    println!("criterion 9 (monotonicity suite): PASS  {checks} ordered pairs, zero violations");
}

/// The analytic engine behind criteria 2-4 feeds on the same counts the
/// finite-key analysis consumes; make sure the analysis itself agrees
/// with a direct evaluation at one anchor point.
#[test]
fn analysis_consistency_at_anchor_point() {
    let config = ProtocolConfig::default();
    let link = profile::link(Variant::Pic, 45.0);
    let duration = qkd_core::link::duration_for_block(&config, &link, config.n_z_block as f64);
    let counts = qkd_core::link::expected_counts(&config, &link, duration);
    let report = analyze_block(&counts, &config, &SecurityParams::from_config(&config)).unwrap();
    assert!(report.feasible);
    assert!((counts.n_z() - config.n_z_block as f64).abs() / (config.n_z_block as f64) < 1e-9);
    assert_eq!(report.l_bits as f64, report.raw_bits.floor());
}
