//! `qkdsim simulate`: Monte Carlo one block, analyze it, write counts and
//! report (and optionally the raw time-tag stream).

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use qkd_core::link::{simulate_block, simulate_block_with_tags, states_for_block};
use qkd_core::timetag::{ChannelMap, StreamFormat, StreamHeader, TagWriter};

use crate::config::RunConfig;
use crate::output;
use crate::{Failure, FailureKind};

use super::{analyze_or_empty, Outcome};

/// Number of states to simulate: a full block by expectation, bounded by
/// the wall-clock cap, or a fixed duration when one is configured.
fn planned_states(cfg: &RunConfig) -> u64 {
    let duty = cfg.link.receiver.duty_cycle();
    let per_wall_second = cfg.protocol.timing.state_rate_hz * duty;
    match cfg.duration_s {
        Some(duration) => (duration * per_wall_second) as u64,
        None => {
            let for_block =
                states_for_block(&cfg.protocol, &cfg.link, cfg.protocol.n_z_block as f64);
            let cap = (cfg.max_block_duration_s * per_wall_second) as u64;
            for_block.min(cap)
        }
    }
    .max(1)
}

pub fn run(
    cfg: &RunConfig,
    out_dir: &Path,
    emit_tags: Option<&Path>,
    tag_format: StreamFormat,
    with_timestamp: bool,
) -> Result<Outcome, Failure> {
    let n_states = planned_states(cfg);
    let counts = match emit_tags {
        None => simulate_block(&cfg.protocol, &cfg.link, cfg.seed, n_states),
        Some(tag_path) => {
            let file = File::create(tag_path).map_err(|e| Failure {
                kind: FailureKind::Usage,
                message: format!("cannot create tag stream {}: {e}", tag_path.display()),
            })?;
            let header = StreamHeader::new(ChannelMap::default().channel_count(), n_states);
            let mut writer =
                TagWriter::new(BufWriter::new(file), tag_format, &header).map_err(|e| Failure {
                    kind: FailureKind::Usage,
                    message: format!("cannot write tag stream header: {e}"),
                })?;
            let mut write_error = None;
            let counts = simulate_block_with_tags(
                &cfg.protocol,
                &cfg.link,
                cfg.seed,
                n_states,
                &mut |tag| {
                    if write_error.is_none() {
                        if let Err(e) = writer.write(tag) {
                            write_error = Some(e);
                        }
                    }
                },
            );
            let finish = writer.finish().err();
            if let Some(e) = write_error.or(finish) {
                return Err(Failure {
                    kind: FailureKind::Usage,
                    message: format!("tag stream write failed: {e}"),
                });
            }
            counts
        }
    };

    let report = analyze_or_empty(&counts, &cfg.protocol, &cfg.security).map_err(|e| Failure {
        kind: FailureKind::Usage,
        message: format!("analysis failed: {e}"),
    })?;
    output::write_counts(&out_dir.join("counts.json"), &counts, with_timestamp)?;
    output::write_report(&out_dir.join("report.json"), &report, with_timestamp)?;
    Ok(if report.feasible {
        Outcome::Success
    } else {
        Outcome::NoPositiveKey
    })
}
