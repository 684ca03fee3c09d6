//! Monte Carlo block simulation, with optional time-tag emission.
//!
//! Count mode and tag mode share one sampling core. Randomness is split
//! into two streams: the `detect` stream drives every event that can end
//! up in [`ObservedCounts`] (Z-detector gates during Z states, X-port
//! gates during X0 states), while the `aux` stream drives events that a
//! receiver also records but sifting discards (cross-basis clicks,
//! interferometer satellite slots, out-of-gate darks). Tag mode consumes
//! both streams; count mode consumes only `detect`. Accumulating the tag
//! stream therefore reproduces the count-mode block exactly, draw for
//! draw.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::protocol::{generate_pattern, IntensityClass, ProtocolConfig, StateSymbol};
use crate::seed;
use crate::timetag::{ChannelMap, TimeTag};

use super::{path_gains, x_port_means, LinkModel, ObservedCounts, ReceiverVariant};

/// Live/dead frame cadence of the acquisition.
///
/// The fiber build pauses for `dead_frames` after every `live_frames` of
/// acquisition while its lock recalibrates; the integrated build never
/// pauses.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AcquisitionSchedule {
    live_frames: u64,
    dead_frames: u64,
}

impl AcquisitionSchedule {
    pub(crate) fn new(link: &LinkModel, config: &ProtocolConfig) -> Self {
        match link.receiver.variant {
            ReceiverVariant::Pic { .. } => AcquisitionSchedule {
                live_frames: 1,
                dead_frames: 0,
            },
            ReceiverVariant::FiberPll {
                recalibration_interval_s,
                recalibration_dead_time_s,
                ..
            } => {
                let frame_s = config.timing.frame_period_ps() as f64 * 1e-12;
                let live = (recalibration_interval_s / frame_s).round().max(1.0) as u64;
                let dead = (recalibration_dead_time_s / frame_s).round() as u64;
                AcquisitionSchedule {
                    live_frames: live,
                    dead_frames: dead,
                }
            }
        }
    }

    /// Wall-clock frame index of the `live_index`-th acquired frame.
    pub(crate) fn wall_frame(&self, live_index: u64) -> u64 {
        if self.dead_frames == 0 {
            live_index
        } else {
            let cycle = self.live_frames + self.dead_frames;
            (live_index / self.live_frames) * cycle + live_index % self.live_frames
        }
    }
}

/// Wall-clock duration covered by an acquisition of `n_states` states,
/// including recalibration dead time. Used identically by the simulator
/// and by stream analysis so both sides book the same block duration.
pub fn acquisition_duration_s(n_states: u64, config: &ProtocolConfig, link: &LinkModel) -> f64 {
    let schedule = AcquisitionSchedule::new(link, config);
    let plen = config.timing.pattern_length as u64;
    let frame_ps = config.timing.frame_period_ps();
    let full = n_states / plen;
    let rem = n_states % plen;
    let end_ps = if rem > 0 {
        schedule.wall_frame(full) * frame_ps + rem * config.timing.state_period_ps
    } else if full > 0 {
        schedule.wall_frame(full - 1) * frame_ps + frame_ps
    } else {
        0
    };
    end_ps as f64 * 1e-12
}

/// Outcome of one detector gate: earliest accepted signal photon and
/// background click, as integer offsets from the gate center.
#[derive(Clone, Copy, Default)]
struct GateOutcome {
    signal: Option<i64>,
    background: Option<i64>,
}

impl GateOutcome {
    fn click(&self) -> bool {
        self.signal.is_some() || self.background.is_some()
    }

    fn offset(&self) -> Option<i64> {
        match (self.signal, self.background) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        }
    }
}

/// Knuth sampler; the per-gate means here are far below one photon.
fn sample_poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let limit = (-mean).exp();
    let mut k = 0u32;
    let mut p = 1.0f64;
    loop {
        p *= rng.random::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}

struct GateSampler {
    half_gate_ps: i64,
    jitter: Option<Normal<f64>>,
}

impl GateSampler {
    fn new(link: &LinkModel) -> Self {
        let sigma = link.detector.jitter_sigma_ps();
        GateSampler {
            half_gate_ps: link.detector.half_gate_ps(),
            jitter: if sigma > 0.0 {
                Some(Normal::new(0.0, sigma).expect("jitter sigma is finite"))
            } else {
                None
            },
        }
    }

    fn jitter_offset(&self, rng: &mut ChaCha8Rng) -> i64 {
        match &self.jitter {
            Some(dist) => dist.sample(rng).round() as i64,
            None => 0,
        }
    }

    /// Sample one gate: Poisson signal photons with per-photon jitter
    /// acceptance, plus a background click uniform in the gate.
    fn gate(&self, rng: &mut ChaCha8Rng, mean: f64, p_background: f64) -> GateOutcome {
        let mut out = GateOutcome::default();
        let photons = sample_poisson(rng, mean);
        for _ in 0..photons {
            let dt = self.jitter_offset(rng);
            if dt >= -self.half_gate_ps && dt < self.half_gate_ps {
                out.signal = Some(out.signal.map_or(dt, |prev: i64| prev.min(dt)));
            }
        }
        if p_background > 0.0 && rng.random::<f64>() < p_background {
            out.background = Some(rng.random_range(-self.half_gate_ps..self.half_gate_ps));
        }
        out
    }

    /// Sample an ungated slot (interferometer satellite): every detected
    /// photon is recorded, nothing restricts the window.
    fn open_slot(&self, rng: &mut ChaCha8Rng, mean: f64) -> Option<i64> {
        let photons = sample_poisson(rng, mean);
        let mut earliest: Option<i64> = None;
        for _ in 0..photons {
            let dt = self.jitter_offset(rng);
            earliest = Some(earliest.map_or(dt, |prev| prev.min(dt)));
        }
        earliest
    }
}

/// Per-intensity-class precomputed gate means (raw, before jitter folding;
/// the sampler applies jitter per photon).
struct ClassMeans {
    /// (early, late) Z-detector means per symbol.
    z_gates: [(f64, f64); 3],
    /// X-port central-slot means for an X0 state: (in-phase, out-of-phase).
    x0_ports: (f64, f64),
    /// X-port central-slot mean during a Z-symbol state (no interference).
    x_central_flat: f64,
    /// X-port satellite-slot mean fed by one occupied bin of a Z state.
    x_satellite_z: f64,
    /// X-port satellite-slot mean per bin of an X0 state.
    x_satellite_x: f64,
}

fn symbol_index(symbol: StateSymbol) -> usize {
    match symbol {
        StateSymbol::Z0 => 0,
        StateSymbol::Z1 => 1,
        StateSymbol::X0 => 2,
    }
}

struct TagBuffer {
    tags: Vec<TimeTag>,
}

impl TagBuffer {
    fn push(&mut self, timestamp_ps: u64, channel: u8) {
        self.tags.push(TimeTag {
            timestamp_ps,
            channel,
        });
    }

    /// Emit everything strictly before `horizon_ps` in timestamp order;
    /// later tags stay buffered because the next frame may still produce
    /// earlier ones.
    fn flush(&mut self, horizon_ps: u64, sink: &mut dyn FnMut(TimeTag)) {
        self.tags
            .sort_unstable_by_key(|t| (t.timestamp_ps, t.channel));
        let cut = self.tags.partition_point(|t| t.timestamp_ps < horizon_ps);
        for tag in self.tags.drain(..cut) {
            sink(tag);
        }
    }
}

/// Simulate a block of `n_states` emitted states and return integer
/// counts. Deterministic in `(config, link, seed, n_states)`.
pub fn simulate_block(
    config: &ProtocolConfig,
    link: &LinkModel,
    seed: u64,
    n_states: u64,
) -> ObservedCounts {
    simulate_core(config, link, seed, n_states, None)
}

/// Same block as [`simulate_block`], additionally emitting every recorded
/// time tag (sifted or not) to `sink` in nondecreasing timestamp order
/// using the standard channel map.
pub fn simulate_block_with_tags(
    config: &ProtocolConfig,
    link: &LinkModel,
    seed: u64,
    n_states: u64,
    sink: &mut dyn FnMut(TimeTag),
) -> ObservedCounts {
    simulate_core(config, link, seed, n_states, Some(sink))
}

fn simulate_core(
    config: &ProtocolConfig,
    link: &LinkModel,
    seed: u64,
    n_states: u64,
    mut sink: Option<&mut dyn FnMut(TimeTag)>,
) -> ObservedCounts {
    config.validate().expect("valid protocol configuration");
    link.validate(&config.timing).expect("valid link model");
    let pattern = generate_pattern(config, seed).expect("validated config");
    let mut detect_rng = seed::stream_rng(seed, seed::DETECT_STREAM);
    let mut aux_rng = seed::stream_rng(seed, seed::AUX_STREAM);

    let gains = path_gains(config, link);
    let sampler = GateSampler::new(link);
    let channels = ChannelMap::default();
    let vis = link.receiver.visibility;
    let means: [ClassMeans; 2] = core::array::from_fn(|idx| {
        let mu = config.intensities.mean_photon(IntensityClass::ALL[idx]);
        ClassMeans {
            z_gates: [
                StateSymbol::Z0.z_gate_means(mu, gains.z_unit, link.extinction_error),
                StateSymbol::Z1.z_gate_means(mu, gains.z_unit, link.extinction_error),
                StateSymbol::X0.z_gate_means(mu, gains.z_unit, link.extinction_error),
            ],
            x0_ports: x_port_means(mu, gains.x_unit, vis),
            x_central_flat: mu * gains.x_unit / 4.0,
            x_satellite_z: mu * gains.x_unit / 4.0,
            x_satellite_x: mu * gains.x_unit / 8.0,
        }
    });

    let timing = &config.timing;
    let plen = timing.pattern_length as u64;
    let frame_ps = timing.frame_period_ps();
    let state_ps = timing.state_period_ps;
    let early_ps = timing.early_center_ps();
    let late_ps = timing.late_center_ps();
    let satellite_late_ps = late_ps + timing.bin_delay_ps;
    let schedule = AcquisitionSchedule::new(link, config);
    let half = sampler.half_gate_ps;

    let mut counts = [[0u64; 2]; 4]; // [n_z, m_z, n_x, m_x][class]
    let mut sent = [0u64; 2];
    let mut buffer = TagBuffer { tags: Vec::new() };

    let total_frames = n_states.div_ceil(plen.max(1));
    for live_frame in 0..total_frames {
        let wall = schedule.wall_frame(live_frame);
        let frame_start = wall * frame_ps;
        let states_here = if live_frame == total_frames - 1 && !n_states.is_multiple_of(plen) {
            n_states % plen
        } else {
            plen
        };
        for slot in 0..states_here {
            let (symbol, class) = pattern.entry(slot as usize);
            let class_idx = (class == IntensityClass::Decoy) as usize;
            sent[class_idx] += 1;
            let m = &means[class_idx];
            let state_start = frame_start + slot * state_ps;

            match symbol {
                StateSymbol::Z0 | StateSymbol::Z1 => {
                    let (m_early, m_late) = m.z_gates[symbol_index(symbol)];
                    let early = sampler.gate(&mut detect_rng, m_early, gains.p_dark);
                    let late = sampler.gate(&mut detect_rng, m_late, gains.p_dark);
                    if early.click() || late.click() {
                        counts[0][class_idx] += 1;
                        // The early bin arrives first, so a double click is
                        // booked as early.
                        let error = if early.click() {
                            symbol == StateSymbol::Z1
                        } else {
                            symbol == StateSymbol::Z0
                        };
                        counts[1][class_idx] += error as u64;
                    }
                    if sink.is_some() {
                        if let Some(dt) = early.offset() {
                            buffer.push(offset_ts(state_start + early_ps, dt), channels.z);
                        }
                        if let Some(dt) = late.offset() {
                            buffer.push(offset_ts(state_start + late_ps, dt), channels.z);
                        }
                        // Cross-basis: the X path still sees this state in
                        // its central and satellite slots.
                        let sat_center = if symbol == StateSymbol::Z0 {
                            state_start + early_ps
                        } else {
                            state_start + satellite_late_ps
                        };
                        for channel in [channels.x_correct, channels.x_error] {
                            let central =
                                sampler.gate(&mut aux_rng, m.x_central_flat, gains.x_background);
                            if let Some(dt) = central.offset() {
                                buffer.push(offset_ts(state_start + late_ps, dt), channel);
                            }
                            if let Some(dt) = sampler.open_slot(&mut aux_rng, m.x_satellite_z) {
                                buffer.push(offset_ts(sat_center, dt), channel);
                            }
                        }
                    }
                }
                StateSymbol::X0 => {
                    let (m_a, m_b) = m.x0_ports;
                    let port_a = sampler.gate(&mut detect_rng, m_a, gains.x_background);
                    let port_b = sampler.gate(&mut detect_rng, m_b, gains.x_background);
                    if port_a.click() || port_b.click() {
                        counts[2][class_idx] += 1;
                        // Coincidences across the two ports are booked on
                        // the in-phase port.
                        counts[3][class_idx] += (port_b.click() && !port_a.click()) as u64;
                    }
                    if sink.is_some() {
                        if let Some(dt) = port_a.offset() {
                            buffer.push(offset_ts(state_start + late_ps, dt), channels.x_correct);
                        }
                        if let Some(dt) = port_b.offset() {
                            buffer.push(offset_ts(state_start + late_ps, dt), channels.x_error);
                        }
                        // Cross-basis Z-path clicks and the two
                        // non-interfering satellite slots.
                        let (z_early, z_late) = m.z_gates[2];
                        let early = sampler.gate(&mut aux_rng, z_early, gains.p_dark);
                        let late = sampler.gate(&mut aux_rng, z_late, gains.p_dark);
                        if let Some(dt) = early.offset() {
                            buffer.push(offset_ts(state_start + early_ps, dt), channels.z);
                        }
                        if let Some(dt) = late.offset() {
                            buffer.push(offset_ts(state_start + late_ps, dt), channels.z);
                        }
                        for channel in [channels.x_correct, channels.x_error] {
                            for center in [state_start + early_ps, state_start + satellite_late_ps]
                            {
                                if let Some(dt) = sampler.open_slot(&mut aux_rng, m.x_satellite_x) {
                                    buffer.push(offset_ts(center, dt), channel);
                                }
                            }
                        }
                    }
                }
            }
        }

        if let Some(ref mut tag_sink) = sink {
            emit_out_of_gate_darks(
                &mut aux_rng,
                &mut buffer,
                config,
                link,
                frame_start,
                states_here,
                half,
            );
            buffer.flush(frame_start + frame_ps, *tag_sink);
        }
    }

    if let Some(ref mut tag_sink) = sink {
        buffer.flush(u64::MAX, *tag_sink);
    }

    let duration_s = acquisition_duration_s(n_states, config, link);
    ObservedCounts {
        n_z_mu1: counts[0][0] as f64,
        m_z_mu1: counts[1][0] as f64,
        n_z_mu2: counts[0][1] as f64,
        m_z_mu2: counts[1][1] as f64,
        n_x_mu1: counts[2][0] as f64,
        m_x_mu1: counts[3][0] as f64,
        n_x_mu2: counts[2][1] as f64,
        m_x_mu2: counts[3][1] as f64,
        sent_mu1: sent[0] as f64,
        sent_mu2: sent[1] as f64,
        duration_s,
    }
}

fn offset_ts(center_ps: u64, offset: i64) -> u64 {
    (center_ps as i64 + offset) as u64
}

/// Dark and stabilization-leakage counts falling outside every gate.
/// Candidates are drawn uniformly over the acquired span of the frame and
/// dropped when they land inside a gate window, whose background the
/// per-gate samplers already provide.
fn emit_out_of_gate_darks(
    rng: &mut ChaCha8Rng,
    buffer: &mut TagBuffer,
    config: &ProtocolConfig,
    link: &LinkModel,
    frame_start: u64,
    states_here: u64,
    half: i64,
) {
    let timing = &config.timing;
    let span_ps = states_here * timing.state_period_ps;
    let span_s = span_ps as f64 * 1e-12;
    let dark_rate = link.detector.dark_rate_hz;
    let pll = link.receiver.pll_noise_rate_hz();
    let channels = ChannelMap::default();
    let early = timing.early_center_ps() as i64;
    let late = timing.late_center_ps() as i64;
    let in_window = |within: i64, center: i64| within - center >= -half && within - center < half;
    for (channel, rate) in [
        (channels.z, dark_rate),
        (channels.x_correct, dark_rate + pll),
        (channels.x_error, dark_rate + pll),
    ] {
        let n = sample_poisson(rng, rate * span_s);
        for _ in 0..n {
            let pos = rng.random_range(0..span_ps);
            let within = (pos % timing.state_period_ps) as i64;
            let in_gate = if channel == channels.z {
                in_window(within, early) || in_window(within, late)
            } else {
                in_window(within, late)
            };
            if !in_gate {
                buffer.push(frame_start + pos, channel);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{expected_counts_for_emission, ChannelModel, DetectorModel, ReceiverModel};
    use crate::profile;

    #[test]
    fn zero_signal_zero_dark_gives_empty_block() {
        let cfg = ProtocolConfig::default();
        let link = LinkModel {
            channel: ChannelModel::new(2_000.0),
            receiver: ReceiverModel {
                variant: ReceiverVariant::Pic {
                    residual_visibility_jitter: 0.0,
                },
                z_path_loss_db: 0.0,
                imzi_insertion_loss_db: 0.0,
                visibility: 1.0,
            },
            detector: DetectorModel {
                efficiency: 0.93,
                dark_rate_hz: 0.0,
                jitter_fwhm_ps: 40.0,
                gate_width_ps: 150.0,
            },
            extinction_error: 0.005,
        };
        let counts = simulate_block(&cfg, &link, 3, 200_000);
        assert_eq!(counts.n_z() + counts.n_x(), 0.0);
        assert_eq!(counts.m_z() + counts.m_x(), 0.0);
        assert_eq!(counts.sent_mu1 + counts.sent_mu2, 200_000.0);
    }

    #[test]
    fn fixed_seed_reproduces_identical_blocks() {
        let cfg = ProtocolConfig::default();
        let link = profile::link(profile::Variant::Pic, 10.0);
        let a = simulate_block(&cfg, &link, 11, 500_000);
        let b = simulate_block(&cfg, &link, 11, 500_000);
        assert_eq!(a, b);
        let c = simulate_block(&cfg, &link, 12, 500_000);
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_counts_track_analytic_expectation() {
        let cfg = ProtocolConfig::default();
        let link = profile::link(profile::Variant::Pic, 10.0);
        let n_states = 20_000_000u64;
        let pattern = generate_pattern(&cfg, 7).unwrap();
        let sampled = simulate_block(&cfg, &link, 7, n_states);
        let expected = expected_counts_for_emission(&cfg, &link, &pattern, n_states, 1.0);
        for (got, want) in [
            (sampled.n_z_mu1, expected.n_z_mu1),
            (sampled.n_z_mu2, expected.n_z_mu2),
            (sampled.m_z_mu1, expected.m_z_mu1),
            (sampled.m_z_mu2, expected.m_z_mu2),
            (sampled.n_x_mu1, expected.n_x_mu1),
            (sampled.n_x_mu2, expected.n_x_mu2),
            (sampled.m_x_mu1, expected.m_x_mu1),
            (sampled.m_x_mu2, expected.m_x_mu2),
        ] {
            if want >= 100.0 {
                assert!(
                    (got - want).abs() <= 5.0 * want.sqrt(),
                    "cell {got} vs expected {want}"
                );
            }
        }
    }

    #[test]
    fn errors_never_exceed_detections() {
        let cfg = ProtocolConfig::default();
        for seed in 0..4 {
            let link = profile::link(profile::Variant::FiberPll, 25.0);
            let counts = simulate_block(&cfg, &link, seed, 2_000_000);
            counts.validate().unwrap();
        }
    }

    #[test]
    fn dead_time_extends_wall_duration() {
        let cfg = ProtocolConfig::default();
        let pic = profile::link(profile::Variant::Pic, 10.0);
        let mut fiber = profile::link(profile::Variant::FiberPll, 10.0);
        // Fast recalibration cycle so many live/dead periods fit in the run.
        fiber.receiver.variant = ReceiverVariant::FiberPll {
            pll_noise_rate_hz: 4_200.0,
            drift_std_rad_per_sqrt_hour: 0.8,
            recalibration_interval_s: 0.002,
            recalibration_dead_time_s: 0.002,
        };
        let n = 50_000_000u64;
        let live = acquisition_duration_s(n, &cfg, &pic);
        let wall = acquisition_duration_s(n, &cfg, &fiber);
        let duty = fiber.receiver.duty_cycle();
        assert!(wall > live);
        let implied = live / wall;
        assert!(
            (implied - duty).abs() < 0.05,
            "implied duty {implied} vs {duty}"
        );
    }

    #[test]
    fn tag_stream_is_time_ordered() {
        let cfg = ProtocolConfig::default();
        let link = profile::link(profile::Variant::Pic, 5.0);
        let mut last = 0u64;
        let mut n_tags = 0u64;
        simulate_block_with_tags(&cfg, &link, 5, 300_000, &mut |tag| {
            assert!(tag.timestamp_ps >= last, "tags out of order");
            last = tag.timestamp_ps;
            n_tags += 1;
        });
        assert!(n_tags > 1_000);
    }

    #[test]
    fn tag_mode_counts_equal_count_mode() {
        let cfg = ProtocolConfig::default();
        let link = profile::link(profile::Variant::FiberPll, 8.0);
        let plain = simulate_block(&cfg, &link, 21, 400_000);
        let mut sink = |_tag: TimeTag| {};
        let tagged = simulate_block_with_tags(&cfg, &link, 21, 400_000, &mut sink);
        assert_eq!(plain, tagged);
    }
}
