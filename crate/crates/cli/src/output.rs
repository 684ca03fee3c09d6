//! File writers for reports, counts and CSV curves.
//!
//! Reports are JSON with fixed field names; an optional `generated_at`
//! ISO-8601 header field is the only run-to-run difference and can be
//! suppressed for byte-identical reruns.

use std::fs;
use std::io::Write;
use std::path::Path;

use qkd_core::finitekey::{KeyRateReport, SweepPoint};
use qkd_core::link::ObservedCounts;
use qkd_core::timetag::QberSeries;
use serde::Serialize;

use crate::{Failure, FailureKind};

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        kind: FailureKind::Usage,
        message: format!("cannot write {}: {e}", path.display()),
    }
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Serialize)]
struct Stamped<T: Serialize> {
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<String>,
    #[serde(flatten)]
    payload: T,
}

fn write_json<T: Serialize>(path: &Path, payload: T, with_timestamp: bool) -> Result<(), Failure> {
    let doc = Stamped {
        generated_at: with_timestamp.then(timestamp),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable payload");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

pub fn write_report(
    path: &Path,
    report: &KeyRateReport,
    with_timestamp: bool,
) -> Result<(), Failure> {
    write_json(path, report, with_timestamp)
}

pub fn write_counts(
    path: &Path,
    counts: &ObservedCounts,
    with_timestamp: bool,
) -> Result<(), Failure> {
    write_json(path, counts, with_timestamp)
}

#[derive(Serialize)]
pub struct OptimizeOutput<'a> {
    pub mu1: f64,
    pub mu2: f64,
    pub p_mu1: f64,
    pub p_z_alice: f64,
    pub feasible: bool,
    pub report: &'a KeyRateReport,
}

pub fn write_optimize(
    path: &Path,
    out: OptimizeOutput<'_>,
    with_timestamp: bool,
) -> Result<(), Failure> {
    write_json(path, out, with_timestamp)
}

pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<(), Failure> {
    let mut file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
    let mut write = || -> std::io::Result<()> {
        writeln!(file, "attenuation_db,skr_bps,qber_z,qber_x")?;
        for p in points {
            writeln!(
                file,
                "{},{},{},{}",
                p.attenuation_db, p.skr_bps, p.qber_z, p.qber_x
            )?;
        }
        file.flush()
    };
    write().map_err(|e| io_failure(path, e))
}

/// Side-by-side rates of the two builds for overlay plotting.
pub fn write_overlay_csv(
    path: &Path,
    pic: &[SweepPoint],
    fiber: &[SweepPoint],
) -> Result<(), Failure> {
    let mut file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
    let mut write = || -> std::io::Result<()> {
        writeln!(file, "attenuation_db,skr_pic_bps,skr_fiber_bps")?;
        for (a, b) in pic.iter().zip(fiber) {
            writeln!(file, "{},{},{}", a.attenuation_db, a.skr_bps, b.skr_bps)?;
        }
        file.flush()
    };
    write().map_err(|e| io_failure(path, e))
}

pub fn write_qber_csv(path: &Path, series: &QberSeries) -> Result<(), Failure> {
    let mut file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
    let mut write = || -> std::io::Result<()> {
        writeln!(file, "window_start_s,qber,samples")?;
        for e in &series.entries {
            writeln!(file, "{},{},{}", e.window_start_s, e.qber, e.samples)?;
        }
        file.flush()
    };
    write().map_err(|e| io_failure(path, e))
}
