//! Detector time-tag ingestion: stream formats, pattern alignment,
//! gate classification, sifting and rolling error-rate series.

mod align;
mod format;
mod sift;

pub use align::estimate_offset;
pub use format::{read_tags, StreamFormat, StreamHeader, TagReader, TagWriter};
pub use sift::{
    accumulate_counts, classify, rolling_qber, BinSlot, Classified, DetectorRole, GateAssignment,
    QberSeries, QberWindow,
};

use thiserror::Error;

/// One detector event from the time-to-digital converter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimeTag {
    pub timestamp_ps: u64,
    pub channel: u8,
}

/// Assignment of detector channels to receiver roles.
///
/// The interferometer's two output ports map to distinct channels; the
/// in-phase port carries the expected X0 outcome and the other port flags
/// phase-flip errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelMap {
    pub z: u8,
    pub x_correct: u8,
    pub x_error: u8,
}

impl Default for ChannelMap {
    fn default() -> Self {
        ChannelMap {
            z: 0,
            x_correct: 1,
            x_error: 2,
        }
    }
}

impl ChannelMap {
    pub fn channel_count(&self) -> u8 {
        self.z.max(self.x_correct).max(self.x_error) + 1
    }
}

/// Stream-to-pattern synchronization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncModel {
    /// Duration of one pattern frame on the tag clock.
    pub frame_period_ps: u64,
    /// Phase of the tag clock relative to the pattern grid.
    pub offset_ps: u64,
    pub channel_map: ChannelMap,
}

/// Errors raised by the tag pipeline.
#[derive(Debug, Error)]
pub enum TagError {
    #[error("tag stream I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad stream header: {0}")]
    Header(String),
    #[error("malformed record at byte {offset}: {detail}")]
    Parse { offset: u64, detail: String },
    #[error("timestamp regression at byte {offset}: {current} ps after {previous} ps")]
    Ordering {
        offset: u64,
        previous: u64,
        current: u64,
    },
    #[error("unknown channel {channel} at byte {offset}; stream declares channels 0..{declared}")]
    UnknownChannel {
        offset: u64,
        channel: u8,
        declared: u8,
    },
    #[error(
        "offset estimation needs >= {required_tags} tags spanning >= {required_frames} frames; \
         got {tags} tags over {frames} frames"
    )]
    InsufficientTags {
        required_tags: usize,
        required_frames: u64,
        tags: usize,
        frames: u64,
    },
    #[error("no emission structure in tag stream (correlation peak contrast {contrast:.2})")]
    AlignmentFailure { contrast: f64 },
}
