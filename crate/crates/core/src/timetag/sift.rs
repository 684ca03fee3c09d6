//! Gate classification, sifting and windowed error rates.

use serde::Serialize;

use crate::link::ObservedCounts;
use crate::protocol::{Basis, EmissionPattern, IntensityClass, StateSymbol, TimingGrid};

use super::{SyncModel, TimeTag};

/// Temporal slot a tag was matched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinSlot {
    Early,
    Late,
    /// Interfering output slot of the X interferometer; X path only.
    Central,
}

/// Which detector produced a tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorRole {
    ZPath,
    XCorrect,
    XError,
}

impl DetectorRole {
    pub fn basis(self) -> Basis {
        match self {
            DetectorRole::ZPath => Basis::Z,
            DetectorRole::XCorrect | DetectorRole::XError => Basis::X,
        }
    }
}

/// A tag matched to a gate window, annotated with what was transmitted in
/// that slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateAssignment {
    pub timestamp_ps: u64,
    /// Global state-occurrence index (monotone across frames); used to
    /// collapse multiple clicks from one state into one detection.
    pub occurrence: u64,
    pub pattern_index: u32,
    pub bin: BinSlot,
    pub role: DetectorRole,
    pub matched_symbol: StateSymbol,
    pub matched_intensity: IntensityClass,
}

/// Classification result: matched assignments plus bookkeeping for tags
/// that fell outside every gate.
#[derive(Debug, Clone, Default)]
pub struct Classified {
    pub assignments: Vec<GateAssignment>,
    pub rejected: u64,
    pub total: u64,
}

/// Map tags to gate windows. Windows are closed on the left, open on the
/// right; tags outside every window are counted as rejected, not errors.
pub fn classify(
    tags: &[TimeTag],
    pattern: &EmissionPattern,
    sync: &SyncModel,
    timing: &TimingGrid,
    half_gate_ps: i64,
) -> Classified {
    let mut out = Classified {
        assignments: Vec::new(),
        rejected: 0,
        total: tags.len() as u64,
    };
    let period = timing.state_period_ps as i64;
    let early = timing.early_center_ps() as i64;
    let late = timing.late_center_ps() as i64;
    let len = pattern.len() as u64;
    let map = &sync.channel_map;
    let in_window = |within: i64, center: i64| {
        let d = within - center;
        d >= -half_gate_ps && d < half_gate_ps
    };

    for tag in tags {
        let t = tag.timestamp_ps as i64 - sync.offset_ps as i64;
        if t < 0 {
            out.rejected += 1;
            continue;
        }
        let occurrence = (t / period) as u64;
        let within = t % period;
        let role = if tag.channel == map.z {
            DetectorRole::ZPath
        } else if tag.channel == map.x_correct {
            DetectorRole::XCorrect
        } else if tag.channel == map.x_error {
            DetectorRole::XError
        } else {
            out.rejected += 1;
            continue;
        };
        let bin = match role {
            DetectorRole::ZPath => {
                if in_window(within, early) {
                    Some(BinSlot::Early)
                } else if in_window(within, late) {
                    Some(BinSlot::Late)
                } else {
                    None
                }
            }
            // Only the central slot interferes; satellite slots are
            // rejected along with everything else off-gate.
            DetectorRole::XCorrect | DetectorRole::XError => {
                in_window(within, late).then_some(BinSlot::Central)
            }
        };
        let Some(bin) = bin else {
            out.rejected += 1;
            continue;
        };
        let pattern_index = (occurrence % len) as u32;
        let (matched_symbol, matched_intensity) = pattern.entry(pattern_index as usize);
        out.assignments.push(GateAssignment {
            timestamp_ps: tag.timestamp_ps,
            occurrence,
            pattern_index,
            bin,
            role,
            matched_symbol,
            matched_intensity,
        });
    }
    out
}

#[derive(Default)]
struct SiftState {
    last_z_occurrence: Option<u64>,
    x_pending: Option<XPending>,
}

struct XPending {
    occurrence: u64,
    class_idx: usize,
    error_counted: bool,
    correct_seen: bool,
}

#[derive(Default)]
struct CellCounts {
    n_z: [u64; 2],
    m_z: [u64; 2],
    n_x: [u64; 2],
    m_x: [u64; 2],
}

fn class_index(class: IntensityClass) -> usize {
    (class == IntensityClass::Decoy) as usize
}

impl SiftState {
    /// Feed one assignment through the sifting rules.
    ///
    /// Cross-basis clicks are discarded. Multiple clicks from one state
    /// occurrence collapse to a single detection: on the Z path the first
    /// (earliest-bin) click wins; on the X path a coincidence is booked on
    /// the in-phase port, so a later in-phase click revokes the error of
    /// an earlier out-of-phase one.
    fn feed(&mut self, a: &GateAssignment, cells: &mut CellCounts) {
        match a.role {
            DetectorRole::ZPath => {
                if a.matched_symbol == StateSymbol::X0 {
                    return; // basis mismatch, sifted away
                }
                if self.last_z_occurrence == Some(a.occurrence) {
                    return; // second bin of a double click
                }
                self.last_z_occurrence = Some(a.occurrence);
                let idx = class_index(a.matched_intensity);
                cells.n_z[idx] += 1;
                let error = matches!(
                    (a.matched_symbol, a.bin),
                    (StateSymbol::Z0, BinSlot::Late) | (StateSymbol::Z1, BinSlot::Early)
                );
                cells.m_z[idx] += error as u64;
            }
            DetectorRole::XCorrect | DetectorRole::XError => {
                if a.matched_symbol != StateSymbol::X0 {
                    return; // basis mismatch, sifted away
                }
                let idx = class_index(a.matched_intensity);
                let is_error = a.role == DetectorRole::XError;
                match &mut self.x_pending {
                    Some(p) if p.occurrence == a.occurrence => {
                        if !is_error && p.error_counted && !p.correct_seen {
                            cells.m_x[p.class_idx] -= 1;
                            p.error_counted = false;
                        }
                        p.correct_seen |= !is_error;
                    }
                    _ => {
                        cells.n_x[idx] += 1;
                        cells.m_x[idx] += is_error as u64;
                        self.x_pending = Some(XPending {
                            occurrence: a.occurrence,
                            class_idx: idx,
                            error_counted: is_error,
                            correct_seen: !is_error,
                        });
                    }
                }
            }
        }
    }
}

/// Sift classified assignments into per-basis, per-intensity counts.
///
/// `n_states` is the number of emitted states the stream covers (from the
/// stream header); it fixes the sent-per-class accounting. `duration_s`
/// is the wall-clock block duration.
pub fn accumulate_counts(
    classified: &Classified,
    pattern: &EmissionPattern,
    n_states: u64,
    duration_s: f64,
) -> ObservedCounts {
    let mut cells = CellCounts::default();
    let mut state = SiftState::default();
    for a in &classified.assignments {
        state.feed(a, &mut cells);
    }

    let plen = pattern.len() as u64;
    let full = n_states.checked_div(plen).unwrap_or(0);
    let rem = n_states.checked_rem(plen).unwrap_or(0) as usize;
    let mut sent = [0u64; 2];
    for class in IntensityClass::ALL {
        sent[class_index(class)] = full * pattern.class_count(class);
    }
    for &(_, class) in &pattern.entries()[..rem] {
        sent[class_index(class)] += 1;
    }

    ObservedCounts {
        n_z_mu1: cells.n_z[0] as f64,
        m_z_mu1: cells.m_z[0] as f64,
        n_z_mu2: cells.n_z[1] as f64,
        m_z_mu2: cells.m_z[1] as f64,
        n_x_mu1: cells.n_x[0] as f64,
        m_x_mu1: cells.m_x[0] as f64,
        n_x_mu2: cells.n_x[1] as f64,
        m_x_mu2: cells.m_x[1] as f64,
        sent_mu1: sent[0] as f64,
        sent_mu2: sent[1] as f64,
        duration_s,
    }
}

/// One rolling-QBER window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QberWindow {
    pub window_start_s: f64,
    pub qber: f64,
    pub samples: u64,
    /// Set when the raw ratio exceeded 0.5 and was clamped.
    pub clamped: bool,
}

/// Windowed error-rate series for one basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QberSeries {
    pub window_s: f64,
    pub entries: Vec<QberWindow>,
}

/// Rolling QBER over fixed windows of `window_s` seconds. Windows with no
/// detections in the requested basis emit no entry.
pub fn rolling_qber(classified: &Classified, basis: Basis, window_s: f64) -> QberSeries {
    assert!(window_s > 0.0, "window must be positive");
    let mut entries = Vec::new();
    let mut current: Option<(u64, CellCounts, SiftState)> = None;

    let mut finalize = |window_idx: u64, cells: &CellCounts| {
        let (n, m) = match basis {
            Basis::Z => (cells.n_z[0] + cells.n_z[1], cells.m_z[0] + cells.m_z[1]),
            Basis::X => (cells.n_x[0] + cells.n_x[1], cells.m_x[0] + cells.m_x[1]),
        };
        if n > 0 {
            let raw = m as f64 / n as f64;
            entries.push(QberWindow {
                window_start_s: window_idx as f64 * window_s,
                qber: raw.min(0.5),
                samples: n,
                clamped: raw > 0.5,
            });
        }
    };

    for a in &classified.assignments {
        let idx = (a.timestamp_ps as f64 * 1e-12 / window_s) as u64;
        match &mut current {
            Some((w, cells, state)) if *w == idx => state.feed(a, cells),
            other => {
                if let Some((w, cells, _)) = other.take() {
                    finalize(w, &cells);
                }
                let mut cells = CellCounts::default();
                let mut state = SiftState::default();
                state.feed(a, &mut cells);
                current = Some((idx, cells, state));
            }
        }
    }
    if let Some((w, cells, _)) = current {
        finalize(w, &cells);
    }
    QberSeries { window_s, entries }
}
