//! `qkdsim stability`: interferometer drift series for the two builds,
//! windowed into comparable error-rate CSVs. Recalibration dead time in
//! the fiber build shows up as missing windows.

use std::path::Path;

use qkd_core::link::drift_series;
use qkd_core::profile;
use qkd_core::timetag::{QberSeries, QberWindow};

use crate::config::RunConfig;
use crate::output;
use crate::{Failure, FailureKind, VariantArg};

use super::Outcome;

fn windowed(series: &[qkd_core::link::DriftSample], window_s: f64) -> QberSeries {
    let mut entries: Vec<QberWindow> = Vec::new();
    let mut current: Option<(u64, f64, u64)> = None;
    for sample in series {
        let idx = (sample.time_s / window_s) as u64;
        match &mut current {
            Some((w, sum, n)) if *w == idx => {
                *sum += sample.qber_x;
                *n += 1;
            }
            other => {
                if let Some((w, sum, n)) = other.take() {
                    entries.push(QberWindow {
                        window_start_s: w as f64 * window_s,
                        qber: sum / n as f64,
                        samples: n,
                        clamped: false,
                    });
                }
                current = Some((idx, sample.qber_x, 1));
            }
        }
    }
    if let Some((w, sum, n)) = current {
        entries.push(QberWindow {
            window_start_s: w as f64 * window_s,
            qber: sum / n as f64,
            samples: n,
            clamped: false,
        });
    }
    QberSeries { window_s, entries }
}

pub fn run(
    cfg: &RunConfig,
    out_dir: &Path,
    duration_s: f64,
    window_s: f64,
    sample_interval_s: f64,
    variant: VariantArg,
) -> Result<Outcome, Failure> {
    if !(duration_s >= window_s && window_s > 0.0 && sample_interval_s > 0.0) {
        return Err(Failure {
            kind: FailureKind::Usage,
            message: "stability needs --duration >= --window > 0 and a positive sample interval"
                .to_string(),
        });
    }
    let selected: &[(profile::Variant, &str)] = match variant {
        VariantArg::Pic => &[(profile::Variant::Pic, "stability_pic.csv")],
        VariantArg::Fiber => &[(profile::Variant::FiberPll, "stability_fiber.csv")],
        VariantArg::Both => &[
            (profile::Variant::Pic, "stability_pic.csv"),
            (profile::Variant::FiberPll, "stability_fiber.csv"),
        ],
    };
    for &(v, filename) in selected {
        let receiver = if cfg.variant() == v {
            cfg.link.receiver
        } else {
            profile::receiver(v)
        };
        let series = drift_series(&receiver, duration_s, sample_interval_s, cfg.seed);
        output::write_qber_csv(&out_dir.join(filename), &windowed(&series, window_s))?;
    }
    Ok(Outcome::Success)
}
