//! `qkdsim optimize`: search intensities and basis bias for the best
//! expected key rate over the configured link.

use std::path::Path;

use qkd_core::finitekey::{optimize_parameters, SearchSpace};

use crate::config::RunConfig;
use crate::output::{self, OptimizeOutput};
use crate::{Failure, FailureKind};

use super::Outcome;

pub fn parse_range(flag: &str, value: &str) -> Result<(f64, f64), Failure> {
    let parts: Vec<&str> = value.split(':').collect();
    let parsed: Option<(f64, f64)> = match parts.as_slice() {
        [single] => single.trim().parse().ok().map(|v: f64| (v, v)),
        [lo, hi] => match (lo.trim().parse(), hi.trim().parse()) {
            (Ok(lo), Ok(hi)) => Some((lo, hi)),
            _ => None,
        },
        _ => None,
    };
    match parsed {
        Some((lo, hi)) if lo <= hi => Ok((lo, hi)),
        _ => Err(Failure {
            kind: FailureKind::Usage,
            message: format!("{flag} must be `LO:HI` (or a single value), got {value:?}"),
        }),
    }
}

pub struct RangeOverrides {
    pub mu1: Option<(f64, f64)>,
    pub mu2: Option<(f64, f64)>,
    pub p_mu1: Option<(f64, f64)>,
    pub p_z: Option<(f64, f64)>,
}

pub fn run(
    cfg: &RunConfig,
    out_dir: &Path,
    ranges: RangeOverrides,
    with_timestamp: bool,
) -> Result<Outcome, Failure> {
    let mut space = SearchSpace::default();
    if let Some(r) = ranges.mu1 {
        space.mu1 = r;
    }
    if let Some(r) = ranges.mu2 {
        space.mu2 = r;
    }
    if let Some(r) = ranges.p_mu1 {
        space.p_mu1 = r;
    }
    if let Some(r) = ranges.p_z {
        space.p_z_alice = r;
    }
    let result = optimize_parameters(&cfg.protocol, &cfg.link, &space, cfg.max_block_duration_s);
    output::write_optimize(
        &out_dir.join("optimize.json"),
        OptimizeOutput {
            mu1: result.mu1,
            mu2: result.mu2,
            p_mu1: result.p_mu1,
            p_z_alice: result.p_z_alice,
            feasible: result.feasible,
            report: &result.report,
        },
        with_timestamp,
    )?;
    Ok(if result.feasible {
        Outcome::Success
    } else {
        Outcome::NoPositiveKey
    })
}
