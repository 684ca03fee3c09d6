//! `qkdsim sweep`: expected key rate against channel attenuation, per
//! receiver build, with an overlay file for plotting both curves.

use std::path::Path;

use qkd_core::finitekey::skr_vs_attenuation;
use qkd_core::profile;

use crate::config::RunConfig;
use crate::output;
use crate::{Failure, FailureKind, VariantArg};

use super::Outcome;

pub fn parse_attenuations(list: &str) -> Result<Vec<f64>, Failure> {
    let values: Result<Vec<f64>, _> = list.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite() && *x >= 0.0) => Ok(v),
        _ => Err(Failure {
            kind: FailureKind::Usage,
            message: format!(
                "--attenuations must be a comma-separated list of nonnegative dB values, got {list:?}"
            ),
        }),
    }
}

/// The curve for one build: the configured receiver when it matches,
/// otherwise the stock profile of the other build.
fn link_for(cfg: &RunConfig, variant: profile::Variant) -> qkd_core::link::LinkModel {
    let mut link = cfg.link;
    if cfg.variant() != variant {
        link.receiver = profile::receiver(variant);
    }
    link
}

pub fn run(
    cfg: &RunConfig,
    out_dir: &Path,
    attenuations: &[f64],
    variant: VariantArg,
) -> Result<Outcome, Failure> {
    let pic = matches!(variant, VariantArg::Pic | VariantArg::Both).then(|| {
        skr_vs_attenuation(
            &cfg.protocol,
            &link_for(cfg, profile::Variant::Pic),
            attenuations,
            cfg.max_block_duration_s,
        )
    });
    let fiber = matches!(variant, VariantArg::Fiber | VariantArg::Both).then(|| {
        skr_vs_attenuation(
            &cfg.protocol,
            &link_for(cfg, profile::Variant::FiberPll),
            attenuations,
            cfg.max_block_duration_s,
        )
    });
    if let Some(points) = &pic {
        output::write_sweep_csv(&out_dir.join("sweep_pic.csv"), points)?;
    }
    if let Some(points) = &fiber {
        output::write_sweep_csv(&out_dir.join("sweep_fiber.csv"), points)?;
    }
    if let (Some(pic), Some(fiber)) = (&pic, &fiber) {
        output::write_overlay_csv(&out_dir.join("sweep_overlay.csv"), pic, fiber)?;
    }
    Ok(Outcome::Success)
}
