//! The two on-disk tag stream formats.
//!
//! Text form: `#`-prefixed header lines, then one `channel<SP>timestamp_ps`
//! record per line. Recognized header keys are `# qtt <version>`,
//! `# channels <count>` and `# states <count>`; other comment lines are
//! ignored.
//!
//! Binary form: a fixed 16-byte header — magic `QTT1`, version byte,
//! channel-count byte, emitted-state count as a little-endian u64, two
//! reserved zero bytes — followed by 9-byte records: channel byte, then
//! the timestamp in picoseconds as a little-endian u64.
//!
//! Readers stream with bounded memory, enforce nondecreasing timestamps
//! and validate channels against the stream's declaration.

use std::io::{BufRead, Write};

use super::{TagError, TimeTag};

const MAGIC: &[u8; 4] = b"QTT1";
const VERSION: u8 = 1;
const BINARY_HEADER_LEN: usize = 16;
const RECORD_LEN: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Text,
    Binary,
}

/// Stream metadata carried in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u8,
    /// Number of declared channels; records must use channels below this.
    pub channel_count: Option<u8>,
    /// Number of emitted states the stream covers, when known. Downstream
    /// accounting (sent-per-class, block duration) derives from this.
    pub states: Option<u64>,
}

impl StreamHeader {
    pub fn new(channel_count: u8, states: u64) -> Self {
        StreamHeader {
            version: VERSION,
            channel_count: Some(channel_count),
            states: Some(states),
        }
    }
}

/// Incremental tag stream writer.
pub struct TagWriter<W: Write> {
    inner: W,
    format: StreamFormat,
}

impl<W: Write> TagWriter<W> {
    pub fn new(mut inner: W, format: StreamFormat, header: &StreamHeader) -> std::io::Result<Self> {
        match format {
            StreamFormat::Text => {
                writeln!(inner, "# qtt {}", header.version)?;
                if let Some(channels) = header.channel_count {
                    writeln!(inner, "# channels {channels}")?;
                }
                if let Some(states) = header.states {
                    writeln!(inner, "# states {states}")?;
                }
            }
            StreamFormat::Binary => {
                let mut buf = [0u8; BINARY_HEADER_LEN];
                buf[..4].copy_from_slice(MAGIC);
                buf[4] = header.version;
                buf[5] = header.channel_count.unwrap_or(0);
                buf[6..14].copy_from_slice(&header.states.unwrap_or(0).to_le_bytes());
                inner.write_all(&buf)?;
            }
        }
        Ok(TagWriter { inner, format })
    }

    pub fn write(&mut self, tag: TimeTag) -> std::io::Result<()> {
        match self.format {
            StreamFormat::Text => writeln!(self.inner, "{} {}", tag.channel, tag.timestamp_ps),
            StreamFormat::Binary => {
                let mut rec = [0u8; RECORD_LEN];
                rec[0] = tag.channel;
                rec[1..].copy_from_slice(&tag.timestamp_ps.to_le_bytes());
                self.inner.write_all(&rec)
            }
        }
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming tag reader; yields records in stream order while tracking
/// byte offsets for diagnostics.
pub struct TagReader<R: BufRead> {
    inner: R,
    format: StreamFormat,
    header: StreamHeader,
    byte_offset: u64,
    previous_ts: Option<u64>,
    in_records: bool,
}

impl<R: BufRead> TagReader<R> {
    /// Open a stream, detecting the format from the leading bytes.
    pub fn new(mut inner: R) -> Result<Self, TagError> {
        let is_binary = {
            let head = inner.fill_buf()?;
            head.len() >= 4 && &head[..4] == MAGIC
        };
        if is_binary {
            let mut buf = [0u8; BINARY_HEADER_LEN];
            read_exact_at(&mut inner, &mut buf, 0)?;
            if buf[4] != VERSION {
                return Err(TagError::Header(format!(
                    "unsupported version {} (expected {VERSION})",
                    buf[4]
                )));
            }
            let states = u64::from_le_bytes(buf[6..14].try_into().expect("slice length"));
            Ok(TagReader {
                inner,
                format: StreamFormat::Binary,
                header: StreamHeader {
                    version: buf[4],
                    channel_count: Some(buf[5]),
                    states: (states > 0).then_some(states),
                },
                byte_offset: BINARY_HEADER_LEN as u64,
                previous_ts: None,
                in_records: false,
            })
        } else {
            Ok(TagReader {
                inner,
                format: StreamFormat::Text,
                header: StreamHeader {
                    version: VERSION,
                    channel_count: None,
                    states: None,
                },
                byte_offset: 0,
                previous_ts: None,
                in_records: false,
            })
        }
    }

    pub fn format(&self) -> StreamFormat {
        self.format
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    fn check(&mut self, tag: TimeTag, record_offset: u64) -> Result<TimeTag, TagError> {
        if let Some(declared) = self.header.channel_count {
            if tag.channel >= declared {
                return Err(TagError::UnknownChannel {
                    offset: record_offset,
                    channel: tag.channel,
                    declared,
                });
            }
        }
        if let Some(previous) = self.previous_ts {
            if tag.timestamp_ps < previous {
                return Err(TagError::Ordering {
                    offset: record_offset,
                    previous,
                    current: tag.timestamp_ps,
                });
            }
        }
        self.previous_ts = Some(tag.timestamp_ps);
        Ok(tag)
    }

    fn next_binary(&mut self) -> Option<Result<TimeTag, TagError>> {
        let record_offset = self.byte_offset;
        let mut rec = [0u8; RECORD_LEN];
        let mut filled = 0;
        while filled < RECORD_LEN {
            match self.inner.read(&mut rec[filled..]) {
                Ok(0) => {
                    return if filled == 0 {
                        None
                    } else {
                        Some(Err(TagError::Parse {
                            offset: record_offset,
                            detail: format!(
                                "truncated record: {filled} of {RECORD_LEN} bytes before EOF"
                            ),
                        }))
                    };
                }
                Ok(n) => filled += n,
                Err(e) => return Some(Err(e.into())),
            }
        }
        self.byte_offset += RECORD_LEN as u64;
        let tag = TimeTag {
            channel: rec[0],
            timestamp_ps: u64::from_le_bytes(rec[1..].try_into().expect("slice length")),
        };
        Some(self.check(tag, record_offset))
    }

    fn next_text(&mut self) -> Option<Result<TimeTag, TagError>> {
        loop {
            let record_offset = self.byte_offset;
            let mut line = String::new();
            match self.inner.read_line(&mut line) {
                Ok(0) => return None,
                Ok(n) => self.byte_offset += n as u64,
                Err(e) => return Some(Err(e.into())),
            }
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                if !self.in_records {
                    self.parse_header_line(rest.trim());
                }
                continue;
            }
            self.in_records = true;
            return Some(self.parse_record(trimmed, record_offset));
        }
    }

    fn parse_header_line(&mut self, rest: &str) {
        let mut parts = rest.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some("channels"), Some(v)) => {
                if let Ok(n) = v.parse::<u8>() {
                    self.header.channel_count = Some(n);
                }
            }
            (Some("states"), Some(v)) => {
                if let Ok(n) = v.parse::<u64>() {
                    self.header.states = Some(n);
                }
            }
            (Some("qtt"), Some(v)) => {
                if let Ok(n) = v.parse::<u8>() {
                    self.header.version = n;
                }
            }
            _ => {}
        }
    }

    fn parse_record(&mut self, line: &str, offset: u64) -> Result<TimeTag, TagError> {
        let mut parts = line.split_whitespace();
        let (Some(ch), Some(ts)) = (parts.next(), parts.next()) else {
            return Err(TagError::Parse {
                offset,
                detail: format!("expected `channel timestamp_ps`, got {line:?}"),
            });
        };
        if parts.next().is_some() {
            return Err(TagError::Parse {
                offset,
                detail: format!("trailing tokens after record in {line:?}"),
            });
        }
        let channel = ch.parse::<u8>().map_err(|_| TagError::Parse {
            offset,
            detail: format!("invalid channel token {ch:?}"),
        })?;
        let timestamp_ps = ts.parse::<u64>().map_err(|_| TagError::Parse {
            offset,
            detail: format!("invalid timestamp token {ts:?}"),
        })?;
        self.check(
            TimeTag {
                channel,
                timestamp_ps,
            },
            offset,
        )
    }
}

fn read_exact_at<R: BufRead>(inner: &mut R, buf: &mut [u8], offset: u64) -> Result<(), TagError> {
    inner.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            TagError::Parse {
                offset,
                detail: "truncated header".to_string(),
            }
        } else {
            TagError::Io(e)
        }
    })
}

impl<R: BufRead> Iterator for TagReader<R> {
    type Item = Result<TimeTag, TagError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.format {
            StreamFormat::Binary => self.next_binary(),
            StreamFormat::Text => self.next_text(),
        }
    }
}

/// Read a whole stream into memory, validating every record.
pub fn read_tags<R: BufRead>(reader: R) -> Result<(StreamHeader, Vec<TimeTag>), TagError> {
    let mut reader = TagReader::new(reader)?;
    let mut tags = Vec::new();
    for tag in &mut reader {
        tags.push(tag?);
    }
    Ok((*reader.header(), tags))
}
