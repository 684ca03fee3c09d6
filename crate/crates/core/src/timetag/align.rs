//! Software clock recovery: estimate the stream-to-pattern offset by
//! correlating the detection-time histogram against the pattern's
//! emission envelope.
//!
//! Two stages. First the sub-state phase is found by folding the Z-channel
//! tags modulo the state period and sliding a two-gate comb (early bin,
//! late bin) over the histogram; the unequal bin/gap spacing makes the
//! comb alignment unique. Then the integer state rotation is found by
//! correlating per-slot occupancy against the known per-slot symbols over
//! all cyclic rotations of the pattern.

use crate::protocol::{EmissionPattern, StateSymbol, TimingGrid};

use super::{ChannelMap, TagError, TimeTag};

const MIN_TAGS: usize = 10_000;
const MIN_FRAMES: u64 = 100;
/// Fold-histogram bin width for the sub-state stage.
const FOLD_BIN_PS: u64 = 20;
/// Correlation top-hat half width, in fold bins.
const COMB_HALF_BINS: i64 = 3;
/// Peak contrast (max / median of the correlation) below which the
/// stream is declared structureless.
const MIN_COMB_CONTRAST: f64 = 1.5;
/// Same threshold for the slot-rotation stage, whose correlation is a
/// shallower statistic.
const MIN_ROTATION_CONTRAST: f64 = 1.15;

/// Estimate the offset (in [0, frame_period)) that maps tag timestamps
/// onto the pattern grid.
pub fn estimate_offset(
    tags: &[TimeTag],
    pattern: &EmissionPattern,
    timing: &TimingGrid,
    channels: &ChannelMap,
) -> Result<u64, TagError> {
    let frame_ps = timing.frame_period_ps();
    let span = match (tags.first(), tags.last()) {
        (Some(first), Some(last)) => last.timestamp_ps - first.timestamp_ps,
        _ => 0,
    };
    let frames = span / frame_ps;
    if tags.len() < MIN_TAGS || frames < MIN_FRAMES {
        return Err(TagError::InsufficientTags {
            required_tags: MIN_TAGS,
            required_frames: MIN_FRAMES,
            tags: tags.len(),
            frames,
        });
    }

    let phase = sub_state_phase(tags, timing, channels)?;
    let rotation = state_rotation(tags, pattern, timing, channels, phase)?;
    Ok((rotation * timing.state_period_ps + phase as u64) % frame_ps)
}

/// Stage 1: phase of the early-bin center modulo the state period.
fn sub_state_phase(
    tags: &[TimeTag],
    timing: &TimingGrid,
    channels: &ChannelMap,
) -> Result<i64, TagError> {
    let period = timing.state_period_ps;
    let bins = (period / FOLD_BIN_PS) as usize;
    let late_shift_bins = (timing.bin_delay_ps / FOLD_BIN_PS) as usize;
    let mut hist = vec![0u64; bins];
    for tag in tags {
        if tag.channel != channels.z {
            continue;
        }
        hist[((tag.timestamp_ps % period) / FOLD_BIN_PS) as usize] += 1;
    }

    // Slide the two-gate comb over the folded histogram.
    let score_at = |s: usize| -> u64 {
        let mut total = 0u64;
        for d in -COMB_HALF_BINS..=COMB_HALF_BINS {
            let early = (s as i64 + d).rem_euclid(bins as i64) as usize;
            let late = (s as i64 + late_shift_bins as i64 + d).rem_euclid(bins as i64) as usize;
            total += hist[early] + hist[late];
        }
        total
    };
    let scores: Vec<f64> = (0..bins).map(|s| score_at(s) as f64).collect();
    let best = peak_with_contrast(&scores, MIN_COMB_CONTRAST)?;

    // Refine to sub-bin precision with a centroid of the residuals around
    // both comb teeth.
    let coarse = best as i64 * FOLD_BIN_PS as i64;
    let window = (COMB_HALF_BINS + 1) * FOLD_BIN_PS as i64;
    let late_shift = timing.bin_delay_ps as i64;
    let period_i = period as i64;
    let mut sum = 0i64;
    let mut count = 0i64;
    for tag in tags {
        if tag.channel != channels.z {
            continue;
        }
        let fold = (tag.timestamp_ps % period) as i64;
        for tooth in [coarse, coarse + late_shift] {
            let mut r = (fold - tooth).rem_euclid(period_i);
            if r > period_i / 2 {
                r -= period_i;
            }
            if r.abs() <= window {
                sum += r;
                count += 1;
            }
        }
    }
    let refined = if count > 0 {
        coarse + (sum as f64 / count as f64).round() as i64
    } else {
        coarse
    };
    // The early bin sits early_center_ps into the state; convert the
    // comb position to the grid phase.
    Ok((refined - timing.early_center_ps() as i64).rem_euclid(period_i))
}

/// Stage 2: cyclic rotation aligning per-slot occupancy with the pattern.
fn state_rotation(
    tags: &[TimeTag],
    pattern: &EmissionPattern,
    timing: &TimingGrid,
    channels: &ChannelMap,
    phase: i64,
) -> Result<u64, TagError> {
    let len = pattern.len();
    let period = timing.state_period_ps as i64;
    let early = timing.early_center_ps() as i64;
    let late = timing.late_center_ps() as i64;
    let half = (timing.bin_delay_ps / 2) as i64;

    // Occupancy per absolute slot index: early-bin, late-bin (Z channel)
    // and central-slot (X channels) detections.
    let mut occ_early = vec![0u32; len];
    let mut occ_late = vec![0u32; len];
    let mut occ_x = vec![0u32; len];
    for tag in tags {
        let t = tag.timestamp_ps as i64 - phase;
        if t < 0 {
            continue;
        }
        let slot = ((t / period) as u64 % len as u64) as usize;
        let within = t % period;
        if tag.channel == channels.z {
            if (within - early).abs() < half {
                occ_early[slot] += 1;
            } else if (within - late).abs() < half {
                occ_late[slot] += 1;
            }
        } else if (within - late).abs() < half {
            occ_x[slot] += 1;
        }
    }

    // Expected relative weights per pattern slot.
    let mut w_early = vec![0f32; len];
    let mut w_late = vec![0f32; len];
    let mut w_x = vec![0f32; len];
    for (i, &(symbol, _)) in pattern.entries().iter().enumerate() {
        match symbol {
            StateSymbol::Z0 => w_early[i] = 1.0,
            StateSymbol::Z1 => w_late[i] = 1.0,
            StateSymbol::X0 => {
                w_early[i] = 0.5;
                w_late[i] = 0.5;
                w_x[i] = 1.0;
            }
        }
    }

    let mut scores = vec![0f64; len];
    #[allow(clippy::needless_range_loop)]
    for r in 0..len {
        let mut acc = 0f64;
        for a in 0..len {
            let p = (a + len - r) % len;
            acc += occ_early[a] as f64 * w_early[p] as f64
                + occ_late[a] as f64 * w_late[p] as f64
                + occ_x[a] as f64 * w_x[p] as f64;
        }
        scores[r] = acc;
    }
    let best = peak_with_contrast(&scores, MIN_ROTATION_CONTRAST)?;
    Ok(best as u64)
}

/// Locate the correlation maximum and require it to stand out against the
/// median score; a flat landscape means the stream carries no usable
/// pattern structure.
fn peak_with_contrast(scores: &[f64], min_contrast: f64) -> Result<usize, TagError> {
    let (best, &max) = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite scores"))
        .expect("nonempty scores");
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let median = sorted[sorted.len() / 2];
    let contrast = if median > 0.0 {
        max / median
    } else {
        f64::INFINITY
    };
    if max <= 0.0 || contrast < min_contrast {
        return Err(TagError::AlignmentFailure { contrast });
    }
    Ok(best)
}
