pub mod analyze;
pub mod optimize;
pub mod simulate;
pub mod stability;
pub mod sweep;

use qkd_core::finitekey::{
    lambda_corr, lambda_sec, AnalysisError, DecoyBounds, KeyRateReport, SecurityParams,
};
use qkd_core::link::ObservedCounts;

/// Successful command outcomes, distinguishing "ran fine but no key".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NoPositiveKey,
}

/// Analysis wrapper that degrades gracefully when the block is empty: a
/// block with no detections is a valid no-key run, not a failure.
pub fn analyze_or_empty(
    counts: &ObservedCounts,
    config: &qkd_core::protocol::ProtocolConfig,
    security: &SecurityParams,
) -> Result<KeyRateReport, AnalysisError> {
    match qkd_core::finitekey::analyze_block(counts, config, security) {
        Ok(report) => Ok(report),
        Err(AnalysisError::InsufficientData { .. }) => {
            let l_sec = lambda_sec(security.eps_sec);
            let l_corr = lambda_corr(security.eps_corr);
            Ok(KeyRateReport {
                l_bits: 0,
                raw_bits: -(l_sec + l_corr),
                skr_bps: 0.0,
                qber_z: counts.qber_z(),
                qber_x: counts.qber_x(),
                lambda_ec: 0.0,
                lambda_sec: l_sec,
                lambda_corr: l_corr,
                bounds: DecoyBounds {
                    s_z0_l: 0.0,
                    s_z0_u: 0.0,
                    s_z1_l: 0.0,
                    s_x1_l: 0.0,
                    v_x1_u: 0.0,
                    phi_z_u: 0.5,
                },
                feasible: false,
                duration_s: counts.duration_s,
            })
        }
        Err(other) => Err(other),
    }
}
