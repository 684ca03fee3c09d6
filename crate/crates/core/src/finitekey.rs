//! Finite-block secret-key analysis with one-decoy statistical bounds.
//!
//! From one block of per-intensity counts the analysis derives lower
//! bounds on the vacuum and single-photon Z-basis detections, an upper
//! bound on the single-photon phase error estimated through the X basis,
//! and combines them into the extractable secret-key length
//!
//! ```text
//! l <= s_z0 + s_z1 (1 - H2(phi_z)) - lambda_ec - lambda_sec - lambda_corr
//! ```
//!
//! Statistical fluctuations are handled with Hoeffding deviations at a
//! per-bound failure budget derived from the secrecy parameter. All count
//! bounds are clamped to their physical ranges; a negative raw key length
//! means "no key", not an error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::{duration_for_block, expected_counts, LinkModel, ObservedCounts};
use crate::protocol::{tau_n, IntensityClass, ProtocolConfig};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("binary entropy argument {0} outside [0, 1]")]
    EntropyDomain(f64),
    #[error("insufficient data for {what}: {detail}")]
    InsufficientData { what: &'static str, detail: String },
}

/// Security and correctness failure budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    pub eps_sec: f64,
    pub eps_corr: f64,
    /// Failure budget per statistical bound. The secrecy term's factor 19
    /// composes the per-bound failures, so the default budget is
    /// `eps_sec / 19`.
    pub eps_partition: f64,
}

impl SecurityParams {
    pub fn new(eps_sec: f64, eps_corr: f64) -> Self {
        SecurityParams {
            eps_sec,
            eps_corr,
            eps_partition: eps_sec / 19.0,
        }
    }

    pub fn from_config(config: &ProtocolConfig) -> Self {
        SecurityParams::new(config.eps_sec, config.eps_corr)
    }
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams::new(1e-12, 1e-12)
    }
}

/// Statistical bounds extracted from one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    /// Lower/upper bounds on vacuum-origin Z detections.
    pub s_z0_l: f64,
    pub s_z0_u: f64,
    /// Lower bound on single-photon Z detections.
    pub s_z1_l: f64,
    /// Lower bound on single-photon X detections.
    pub s_x1_l: f64,
    /// Upper bound on single-photon X errors.
    pub v_x1_u: f64,
    /// Upper bound on the single-photon phase error rate.
    pub phi_z_u: f64,
}

/// Full analysis record for one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub l_bits: u64,
    /// Raw bound before clamping at zero; kept for diagnostics.
    pub raw_bits: f64,
    pub skr_bps: f64,
    pub qber_z: f64,
    pub qber_x: f64,
    pub lambda_ec: f64,
    pub lambda_sec: f64,
    pub lambda_corr: f64,
    pub bounds: DecoyBounds,
    pub feasible: bool,
    pub duration_s: f64,
}

/// Binary entropy in bits, with `H2(0) = H2(1) = 0` by continuity.
pub fn binary_entropy(x: f64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(AnalysisError::EntropyDomain(x));
    }
    Ok(h2(x))
}

fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Secrecy term `6 log2(19 / eps)` in bits.
pub fn lambda_sec(eps_sec: f64) -> f64 {
    6.0 * (19.0 / eps_sec).log2()
}

/// Correctness term `log2(2 / eps)` in bits.
pub fn lambda_corr(eps_corr: f64) -> f64 {
    (2.0 / eps_corr).log2()
}

/// Both security terms for a parameter set.
pub fn lambda_terms(security: &SecurityParams) -> (f64, f64) {
    (lambda_sec(security.eps_sec), lambda_corr(security.eps_corr))
}

/// Hoeffding deviation `sqrt((n / 2) ln(1 / eps))`.
pub fn hoeffding_delta(n: f64, eps: f64) -> f64 {
    debug_assert!(n >= 0.0 && eps > 0.0 && eps < 1.0);
    (n / 2.0 * (1.0 / eps).ln()).sqrt()
}

/// Bits disclosed during error correction: `n_z f_ec H2(qber_z)`.
pub fn lambda_ec(n_z: f64, qber_z: f64, f_ec: f64) -> f64 {
    n_z * f_ec * h2(qber_z)
}

/// Hoeffding deviations applied to the four basis totals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HoeffdingDeltas {
    pub n_z: f64,
    pub m_z: f64,
    pub n_x: f64,
    pub m_x: f64,
}

impl HoeffdingDeltas {
    pub fn from_counts(counts: &ObservedCounts, security: &SecurityParams) -> Self {
        let eps = security.eps_partition;
        HoeffdingDeltas {
            n_z: hoeffding_delta(counts.n_z(), eps),
            m_z: hoeffding_delta(counts.m_z(), eps),
            n_x: hoeffding_delta(counts.n_x(), eps),
            m_x: hoeffding_delta(counts.m_x(), eps),
        }
    }
}

/// One-decoy bounds on vacuum and single-photon contributions.
///
/// Fails when the block carries no Z detections. When the single-photon
/// bounds degenerate to zero the phase error is pinned at its maximal
/// value 0.5 instead of failing, so a no-key verdict still produces a
/// report.
pub fn decoy_bounds(
    counts: &ObservedCounts,
    config: &ProtocolConfig,
    security: &SecurityParams,
) -> Result<DecoyBounds, AnalysisError> {
    let deltas = HoeffdingDeltas::from_counts(counts, security);
    decoy_bounds_with_deltas(counts, config, security, &deltas)
}

/// Test hook: the same bounds with explicit deviations, so the
/// asymptotic limit (all deltas zero) can be exercised directly.
pub fn decoy_bounds_with_deltas(
    counts: &ObservedCounts,
    config: &ProtocolConfig,
    security: &SecurityParams,
    deltas: &HoeffdingDeltas,
) -> Result<DecoyBounds, AnalysisError> {
    counts
        .validate()
        .map_err(|e| AnalysisError::InsufficientData {
            what: "decoy bounds",
            detail: e.to_string(),
        })?;
    if counts.n_z() <= 0.0 {
        return Err(AnalysisError::InsufficientData {
            what: "decoy bounds",
            detail: "no Z-basis detections in block".into(),
        });
    }

    let iv = &config.intensities;
    let (mu1, mu2) = (iv.mu1, iv.mu2);
    let tau0 = tau_n(config, 0);
    let tau1 = tau_n(config, 1);

    // Per-class counts rescaled to intensity-independent yields:
    // (e^{mu_k} / p_k)(count +/- delta).
    let scaled = |count: f64, class: IntensityClass, delta: f64| {
        let mu = iv.mean_photon(class);
        (mu.exp() / iv.probability(class)) * (count + delta)
    };
    let n_z_mu1_plus = scaled(counts.n_z_mu1, IntensityClass::Signal, deltas.n_z);
    let n_z_mu2_minus = scaled(counts.n_z_mu2, IntensityClass::Decoy, -deltas.n_z);
    let n_x_mu1_plus = scaled(counts.n_x_mu1, IntensityClass::Signal, deltas.n_x);
    let n_x_mu2_minus = scaled(counts.n_x_mu2, IntensityClass::Decoy, -deltas.n_x);
    let m_x_mu1_plus = scaled(counts.m_x_mu1, IntensityClass::Signal, deltas.m_x);
    let m_x_mu2_minus = scaled(counts.m_x_mu2, IntensityClass::Decoy, -deltas.m_x);

    let span = mu1 - mu2;

    // Vacuum bounds in the Z basis. Tightening the lower bound under the
    // upper keeps the pair ordered even on inconsistent inputs; lowering
    // a lower bound is always sound.
    let s_z0_u = (2.0 * (counts.m_z() + deltas.n_z)).clamp(0.0, counts.n_z());
    let s_z0_l = (tau0 * (mu1 * n_z_mu2_minus - mu2 * n_z_mu1_plus) / span)
        .clamp(0.0, counts.n_z())
        .min(s_z0_u);

    // Single-photon lower bounds, one per basis.
    let single_photon_lower = |n_low_minus: f64, n_high_plus: f64, s0_u: f64, total: f64| {
        let bracket = n_low_minus
            - (mu2 * mu2) / (mu1 * mu1) * n_high_plus
            - ((mu1 * mu1 - mu2 * mu2) / (mu1 * mu1)) * s0_u / tau0;
        (tau1 * mu1 / (mu2 * span) * bracket).clamp(0.0, total)
    };
    let s_z1_l = single_photon_lower(n_z_mu2_minus, n_z_mu1_plus, s_z0_u, counts.n_z());
    let s_x0_u = (2.0 * (counts.m_x() + deltas.n_x)).clamp(0.0, counts.n_x());
    let s_x1_l = single_photon_lower(n_x_mu2_minus, n_x_mu1_plus, s_x0_u, counts.n_x());

    // Single-photon X-error upper bound.
    let v_x1_u = (tau1 * (m_x_mu1_plus - m_x_mu2_minus) / span).clamp(0.0, counts.n_x());

    let phi_z_u = if s_x1_l > 0.0 && s_z1_l > 0.0 {
        phase_error_from_parts(v_x1_u, s_z1_l, s_x1_l, security)
    } else {
        // Degenerate statistics: no single-photon credit survives, so the
        // maximally pessimistic phase error keeps the report well-formed.
        0.5
    };

    Ok(DecoyBounds {
        s_z0_l,
        s_z0_u,
        s_z1_l,
        s_x1_l,
        v_x1_u,
        phi_z_u,
    })
}

/// Finite-statistics correction translating the X-basis error bound onto
/// the Z basis.
fn gamma_correction(a: f64, b: f64, c: f64, d: f64) -> f64 {
    if b <= 0.0 || b >= 1.0 {
        return 0.0;
    }
    let front = (c + d) * (1.0 - b) * b / (c * d * core::f64::consts::LN_2);
    let arg = (c + d) / (c * d * (1.0 - b) * b) * (21.0 / a).powi(2);
    let term = front * arg.log2();
    term.max(0.0).sqrt()
}

/// Upper bound on the phase error rate of the Z-basis single-photon
/// detections, clamped to [0, 0.5].
pub fn phase_error_upper(
    bounds: &DecoyBounds,
    security: &SecurityParams,
) -> Result<f64, AnalysisError> {
    if bounds.s_x1_l <= 0.0 || bounds.s_z1_l <= 0.0 {
        return Err(AnalysisError::InsufficientData {
            what: "phase error",
            detail: format!(
                "single-photon bounds degenerate (s_z1_l = {}, s_x1_l = {})",
                bounds.s_z1_l, bounds.s_x1_l
            ),
        });
    }
    Ok(phase_error_from_parts(
        bounds.v_x1_u,
        bounds.s_z1_l,
        bounds.s_x1_l,
        security,
    ))
}

fn phase_error_from_parts(v_x1_u: f64, s_z1_l: f64, s_x1_l: f64, security: &SecurityParams) -> f64 {
    let base = (v_x1_u / s_x1_l).min(1.0);
    let gamma = gamma_correction(security.eps_partition, base, s_z1_l, s_x1_l);
    (base + gamma).clamp(0.0, 0.5)
}

/// Evaluate the key-length bound for one block.
pub fn secret_key_length(
    counts: &ObservedCounts,
    bounds: &DecoyBounds,
    security: &SecurityParams,
    config: &ProtocolConfig,
) -> KeyRateReport {
    let (l_sec, l_corr) = lambda_terms(security);
    let qber_z = counts.qber_z();
    let qber_x = counts.qber_x();
    let l_ec = lambda_ec(counts.n_z(), qber_z, config.f_ec);
    let raw = bounds.s_z0_l + bounds.s_z1_l * (1.0 - h2(bounds.phi_z_u)) - l_ec - l_sec - l_corr;
    let l_bits = if raw > 0.0 { raw.floor() as u64 } else { 0 };
    KeyRateReport {
        l_bits,
        raw_bits: raw,
        skr_bps: l_bits as f64 / counts.duration_s,
        qber_z,
        qber_x,
        lambda_ec: l_ec,
        lambda_sec: l_sec,
        lambda_corr: l_corr,
        bounds: *bounds,
        feasible: l_bits > 0,
        duration_s: counts.duration_s,
    }
}

/// Bounds plus key length in one step.
pub fn analyze_block(
    counts: &ObservedCounts,
    config: &ProtocolConfig,
    security: &SecurityParams,
) -> Result<KeyRateReport, AnalysisError> {
    let bounds = decoy_bounds(counts, config, security)?;
    Ok(secret_key_length(counts, &bounds, security, config))
}

/// One point of a rate-versus-loss sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub attenuation_db: f64,
    pub skr_bps: f64,
    pub qber_z: f64,
    pub qber_x: f64,
}

/// Expected secret key rate against channel attenuation, using the
/// analytic count engine. Each point accumulates a full block (capped at
/// `max_block_duration_s` of wall time) and evaluates the finite-block
/// bound. Output is sorted by attenuation.
pub fn skr_vs_attenuation(
    config: &ProtocolConfig,
    link_template: &LinkModel,
    attenuations_db: &[f64],
    max_block_duration_s: f64,
) -> Vec<SweepPoint> {
    let security = SecurityParams::from_config(config);
    let mut points: Vec<SweepPoint> = attenuations_db
        .iter()
        .map(|&attenuation_db| {
            let mut link = *link_template;
            link.channel.attenuation_db = attenuation_db;
            let duration = duration_for_block(config, &link, config.n_z_block as f64)
                .min(max_block_duration_s);
            let counts = expected_counts(config, &link, duration);
            match analyze_block(&counts, config, &security) {
                Ok(report) => SweepPoint {
                    attenuation_db,
                    skr_bps: report.skr_bps,
                    qber_z: report.qber_z,
                    qber_x: report.qber_x,
                },
                Err(_) => SweepPoint {
                    attenuation_db,
                    skr_bps: 0.0,
                    qber_z: counts.qber_z(),
                    qber_x: counts.qber_x(),
                },
            }
        })
        .collect();
    points.sort_by(|a, b| {
        a.attenuation_db
            .partial_cmp(&b.attenuation_db)
            .expect("finite attenuations")
    });
    points
}

/// Box constraints for the intensity/probability search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub mu1: (f64, f64),
    pub mu2: (f64, f64),
    pub p_mu1: (f64, f64),
    pub p_z_alice: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            mu1: (0.15, 0.9),
            mu2: (0.02, 0.4),
            p_mu1: (0.4, 0.95),
            p_z_alice: (0.2, 0.9),
        }
    }
}

/// Optimizer outcome; `feasible` is false when no point in the space
/// yields a positive key.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub mu1: f64,
    pub mu2: f64,
    pub p_mu1: f64,
    pub p_z_alice: f64,
    pub report: KeyRateReport,
    pub feasible: bool,
}

const GRID_POINTS: usize = 6;
const REFINE_ROUNDS: usize = 40;

fn axis(lo_hi: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = lo_hi;
    if hi <= lo {
        return vec![lo];
    }
    (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect()
}

/// Deterministic derivative-free maximization of the expected secret key
/// rate: a coarse grid pass followed by coordinate pattern-search
/// refinement with step halving. Never returns a constraint-violating
/// point.
pub fn optimize_parameters(
    config_template: &ProtocolConfig,
    link: &LinkModel,
    space: &SearchSpace,
    max_block_duration_s: f64,
) -> OptimizationResult {
    let security = SecurityParams::new(config_template.eps_sec, config_template.eps_corr);
    let evaluate = |point: [f64; 4]| -> Option<KeyRateReport> {
        let [mu1, mu2, p_mu1, p_z_alice] = point;
        let mut config = config_template.clone();
        config.intensities.mu1 = mu1;
        config.intensities.mu2 = mu2;
        config.intensities.p_mu1 = p_mu1;
        config.p_z_alice = p_z_alice;
        config.validate().ok()?;
        let duration =
            duration_for_block(&config, link, config.n_z_block as f64).min(max_block_duration_s);
        let counts = expected_counts(&config, link, duration);
        analyze_block(&counts, &config, &security).ok()
    };
    let objective = |report: &Option<KeyRateReport>| report.as_ref().map_or(0.0, |r| r.skr_bps);

    let mut best_point = [
        space.mu1.0,
        space.mu2.0.min(space.mu1.0 * 0.5),
        space.p_mu1.0,
        space.p_z_alice.0,
    ];
    let mut best_report = evaluate(best_point);
    for &mu1 in &axis(space.mu1) {
        for &mu2 in &axis(space.mu2) {
            if mu2 >= mu1 {
                continue;
            }
            for &p_mu1 in &axis(space.p_mu1) {
                for &p_z in &axis(space.p_z_alice) {
                    let point = [mu1, mu2, p_mu1, p_z];
                    let report = evaluate(point);
                    if objective(&report) > objective(&best_report) {
                        best_point = point;
                        best_report = report;
                    }
                }
            }
        }
    }

    // Pattern search around the grid optimum.
    let ranges = [space.mu1, space.mu2, space.p_mu1, space.p_z_alice];
    let mut steps: [f64; 4] = core::array::from_fn(|i| {
        let (lo, hi) = ranges[i];
        ((hi - lo) / (GRID_POINTS - 1) as f64 / 2.0).max(0.0)
    });
    for _ in 0..REFINE_ROUNDS {
        let mut improved = false;
        for dim in 0..4 {
            if steps[dim] <= 0.0 {
                continue;
            }
            for sign in [-1.0, 1.0] {
                let mut candidate = best_point;
                candidate[dim] =
                    (candidate[dim] + sign * steps[dim]).clamp(ranges[dim].0, ranges[dim].1);
                if candidate[1] >= candidate[0] {
                    continue;
                }
                let report = evaluate(candidate);
                if objective(&report) > objective(&best_report) {
                    best_point = candidate;
                    best_report = report;
                    improved = true;
                }
            }
        }
        if !improved {
            for step in &mut steps {
                *step /= 2.0;
            }
            if steps.iter().all(|s| *s < 1e-4) {
                break;
            }
        }
    }

    let report = best_report.unwrap_or_else(|| {
        // Whole space infeasible (e.g. no detections); report an empty
        // block verdict at the template parameters.
        let duration = max_block_duration_s.max(1.0);
        KeyRateReport {
            l_bits: 0,
            raw_bits: f64::NEG_INFINITY,
            skr_bps: 0.0,
            qber_z: 0.0,
            qber_x: 0.0,
            lambda_ec: 0.0,
            lambda_sec: lambda_sec(config_template.eps_sec),
            lambda_corr: lambda_corr(config_template.eps_corr),
            bounds: DecoyBounds {
                s_z0_l: 0.0,
                s_z0_u: 0.0,
                s_z1_l: 0.0,
                s_x1_l: 0.0,
                v_x1_u: 0.0,
                phi_z_u: 0.5,
            },
            feasible: false,
            duration_s: duration,
        }
    });
    OptimizationResult {
        mu1: best_point[0],
        mu2: best_point[1],
        p_mu1: best_point[2],
        p_z_alice: best_point[3],
        feasible: report.feasible,
        report,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile;

    #[test]
    fn entropy_reference_points() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.02).unwrap() - 0.141_440_5).abs() < 1e-5);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.1).is_err());
    }

    #[test]
    fn entropy_is_symmetric_and_concave() {
        for i in 1..50 {
            let x = i as f64 / 100.0;
            assert!((h2(x) - h2(1.0 - x)).abs() < 1e-12);
        }
        // Concavity on a grid: midpoint value above chord.
        for i in 1..49 {
            let a = i as f64 / 100.0;
            let b = a + 0.01;
            assert!(h2((a + b) / 2.0) >= (h2(a) + h2(b)) / 2.0 - 1e-12);
        }
    }

    #[test]
    fn lambda_reference_values() {
        assert!((lambda_sec(1e-12) - 264.666).abs() < 1e-3);
        assert!((lambda_corr(1e-12) - 40.863).abs() < 1e-3);
        assert_eq!(lambda_sec(19.0), 0.0);
    }

    #[test]
    fn hoeffding_reference_values() {
        assert_eq!(hoeffding_delta(0.0, 1e-12), 0.0);
        assert!((hoeffding_delta(1e7, 1e-12) - 11_753.9).abs() < 0.1);
        // Monotone in n and in 1/eps.
        assert!(hoeffding_delta(2e7, 1e-12) > hoeffding_delta(1e7, 1e-12));
        assert!(hoeffding_delta(1e7, 1e-14) > hoeffding_delta(1e7, 1e-12));
    }

    #[test]
    fn lambda_ec_reference_values() {
        assert_eq!(lambda_ec(1e7, 0.0, 1.16), 0.0);
        assert!((lambda_ec(1e7, 0.02, 1.16) - 1.640_7e6).abs() < 2e2);
        assert!(lambda_ec(1e7, 0.02, 1.0) < lambda_ec(1e7, 0.02, 1.16));
    }

    /// Expectation-valued counts with no darks and no errors at a given
    /// single-photon transmittance, built from a plain Poisson expansion.
    fn ideal_counts(config: &ProtocolConfig, eta: f64, states: f64) -> ObservedCounts {
        let yield_for = |mu: f64| -> f64 {
            (0..=60)
                .map(|n| crate::protocol::poisson_pmf(mu, n) * (1.0 - (1.0 - eta).powi(n as i32)))
                .sum()
        };
        let iv = &config.intensities;
        let n_z_mu1 =
            states * config.p_z_alice * iv.probability(IntensityClass::Signal) * yield_for(iv.mu1);
        let n_z_mu2 =
            states * config.p_z_alice * iv.probability(IntensityClass::Decoy) * yield_for(iv.mu2);
        ObservedCounts {
            n_z_mu1,
            n_z_mu2,
            n_x_mu1: n_z_mu1,
            n_x_mu2: n_z_mu2,
            duration_s: 1.0,
            sent_mu1: states * iv.probability(IntensityClass::Signal),
            sent_mu2: states * iv.probability(IntensityClass::Decoy),
            ..ObservedCounts::default()
        }
    }

    #[test]
    fn asymptotic_single_photon_bound_matches_poisson_oracle() {
        // Small decoy intensity keeps the one-decoy bracket tight; the
        // oracle is the direct Poisson expansion of the true
        // single-photon detection fraction.
        let mut config = ProtocolConfig::default();
        config.intensities.mu1 = 0.4;
        config.intensities.mu2 = 0.02;
        let eta = 1e-3;
        let states = 1e12;
        let counts = ideal_counts(&config, eta, states);
        let security = SecurityParams::default();
        let bounds =
            decoy_bounds_with_deltas(&counts, &config, &security, &HoeffdingDeltas::default())
                .unwrap();
        let true_singles = states * config.p_z_alice * tau_n(&config, 1) * eta;
        assert!(bounds.s_z1_l <= true_singles * 1.0001);
        assert!(
            bounds.s_z1_l >= 0.99 * true_singles,
            "bound {} vs oracle {}",
            bounds.s_z1_l,
            true_singles
        );
    }

    #[test]
    fn empty_z_basis_is_an_error() {
        let counts = ObservedCounts {
            duration_s: 1.0,
            ..ObservedCounts::default()
        };
        let cfg = ProtocolConfig::default();
        assert!(matches!(
            decoy_bounds(&counts, &cfg, &SecurityParams::default()),
            Err(AnalysisError::InsufficientData { .. })
        ));
    }

    #[test]
    fn gamma_correction_matches_independent_expression() {
        // Straight re-evaluation of the correction formula with explicit
        // arithmetic, as an independent route.
        let (a, b, c, d) = (1e-12, 0.02, 1e6, 1e6);
        let ln2 = core::f64::consts::LN_2;
        let expected = ((c + d) * (1.0 - b) * b / (c * d * ln2)
            * ((c + d) / (c * d * (1.0 - b) * b) * (21.0 / a) * (21.0 / a)).log2())
        .sqrt();
        let got = gamma_correction(a, b, c, d);
        assert!((got - expected).abs() < 1e-12);
        // The b -> 0 limit suppresses the correction entirely.
        assert_eq!(gamma_correction(a, 0.0, c, d), 0.0);
    }

    #[test]
    fn phase_error_error_free_limit_is_zero() {
        let bounds = DecoyBounds {
            s_z0_l: 0.0,
            s_z0_u: 0.0,
            s_z1_l: 1e6,
            s_x1_l: 1e6,
            v_x1_u: 0.0,
            phi_z_u: 0.0,
        };
        let phi = phase_error_upper(&bounds, &SecurityParams::default()).unwrap();
        assert_eq!(phi, 0.0);
    }

    #[test]
    fn phase_error_rejects_degenerate_bounds() {
        let bounds = DecoyBounds {
            s_z0_l: 0.0,
            s_z0_u: 0.0,
            s_z1_l: 1e6,
            s_x1_l: 0.0,
            v_x1_u: 10.0,
            phi_z_u: 0.5,
        };
        assert!(phase_error_upper(&bounds, &SecurityParams::default()).is_err());
    }

    #[test]
    fn all_zero_bounds_yield_no_key() {
        let counts = ObservedCounts {
            n_z_mu1: 10.0,
            duration_s: 1.0,
            sent_mu1: 100.0,
            sent_mu2: 50.0,
            ..ObservedCounts::default()
        };
        let bounds = DecoyBounds {
            s_z0_l: 0.0,
            s_z0_u: 0.0,
            s_z1_l: 0.0,
            s_x1_l: 0.0,
            v_x1_u: 0.0,
            phi_z_u: 0.5,
        };
        let cfg = ProtocolConfig::default();
        let report = secret_key_length(&counts, &bounds, &SecurityParams::default(), &cfg);
        assert_eq!(report.l_bits, 0);
        assert!(!report.feasible);
        assert!(report.raw_bits < 0.0);
    }

    #[test]
    fn maximal_phase_error_never_yields_key_on_model_blocks() {
        let cfg = ProtocolConfig::default();
        let security = SecurityParams::default();
        for att in [0.0, 10.0, 25.0, 40.0] {
            let link = profile::link(profile::Variant::Pic, att);
            let duration = duration_for_block(&cfg, &link, cfg.n_z_block as f64).min(86_400.0);
            let counts = expected_counts(&cfg, &link, duration);
            let mut bounds = decoy_bounds(&counts, &cfg, &security).unwrap();
            bounds.phi_z_u = 0.5;
            let report = secret_key_length(&counts, &bounds, &security, &cfg);
            assert!(!report.feasible, "key at {att} dB despite phi = 0.5");
        }
    }

    #[test]
    fn key_length_nonincreasing_in_observed_error_rates() {
        // Synthetic blocks where only the error tallies move.
        let cfg = ProtocolConfig::default();
        let security = SecurityParams::default();
        let link = profile::link(profile::Variant::Pic, 20.0);
        let duration = duration_for_block(&cfg, &link, cfg.n_z_block as f64);
        let base = expected_counts(&cfg, &link, duration);
        let mut previous = u64::MAX;
        for step in 0..12 {
            let scale = step as f64 / 11.0;
            let mut counts = base;
            counts.m_x_mu1 = counts.n_x_mu1 * 0.4 * scale;
            counts.m_x_mu2 = counts.n_x_mu2 * 0.4 * scale;
            let report = analyze_block(&counts, &cfg, &security).unwrap();
            assert!(report.l_bits <= previous, "l grew with qber_x");
            previous = report.l_bits;
        }
        previous = u64::MAX;
        for step in 0..12 {
            let scale = step as f64 / 11.0;
            let mut counts = base;
            counts.m_z_mu1 = counts.n_z_mu1 * 0.4 * scale;
            counts.m_z_mu2 = counts.n_z_mu2 * 0.4 * scale;
            let report = analyze_block(&counts, &cfg, &security).unwrap();
            assert!(report.l_bits <= previous, "l grew with qber_z");
            previous = report.l_bits;
        }
    }

    #[test]
    fn key_length_scales_with_block_size_in_asymptotic_regime() {
        // Statistical corrections scale as sqrt(n), so deep blocks must
        // scale the key length almost proportionally.
        let cfg = ProtocolConfig::default();
        let security = SecurityParams::default();
        let link = profile::link(profile::Variant::Pic, 10.0);
        let duration = duration_for_block(&cfg, &link, 10.0 * cfg.n_z_block as f64);
        let small =
            analyze_block(&expected_counts(&cfg, &link, duration), &cfg, &security).unwrap();
        let large = analyze_block(
            &expected_counts(&cfg, &link, duration * 10.0),
            &cfg,
            &security,
        )
        .unwrap();
        let ratio = large.l_bits as f64 / small.l_bits as f64;
        assert!(
            (ratio - 10.0).abs() / 10.0 < 0.05,
            "block scaling ratio {ratio}"
        );
    }

    #[test]
    fn sweep_is_sorted_and_monotone() {
        let cfg = ProtocolConfig::default();
        let link = profile::link(profile::Variant::Pic, 0.0);
        let atts: Vec<f64> = vec![30.0, 0.0, 20.0, 10.0, 40.0, 5.0];
        let curve = skr_vs_attenuation(&cfg, &link, &atts, 86_400.0);
        for pair in curve.windows(2) {
            assert!(pair[0].attenuation_db < pair[1].attenuation_db);
            assert!(pair[0].skr_bps >= pair[1].skr_bps);
        }
    }

    #[test]
    fn optimizer_finds_positive_key_at_zero_loss() {
        let cfg = ProtocolConfig::default();
        let link = profile::link(profile::Variant::Pic, 0.0);
        let result = optimize_parameters(&cfg, &link, &SearchSpace::default(), 86_400.0);
        assert!(result.feasible);
        assert!(result.report.skr_bps > 0.0);
        assert!(result.mu2 < result.mu1);
        // Deterministic across invocations.
        let again = optimize_parameters(&cfg, &link, &SearchSpace::default(), 86_400.0);
        assert_eq!(result, again);
    }

    #[test]
    fn optimizer_separates_the_builds_at_45_db() {
        // At the deepest working attenuation the integrated build can
        // still be tuned into a positive key; the fiber build cannot,
        // anywhere in the search space.
        let cfg = ProtocolConfig::default();
        let pic = optimize_parameters(
            &cfg,
            &profile::link(profile::Variant::Pic, 45.0),
            &SearchSpace::default(),
            86_400.0,
        );
        assert!(pic.feasible && pic.report.skr_bps > 0.0);
        let fiber = optimize_parameters(
            &cfg,
            &profile::link(profile::Variant::FiberPll, 45.0),
            &SearchSpace::default(),
            86_400.0,
        );
        assert!(!fiber.feasible);
        assert_eq!(fiber.report.l_bits, 0);
    }

    #[test]
    fn degenerate_search_space_returns_that_point() {
        let cfg = ProtocolConfig::default();
        let link = profile::link(profile::Variant::Pic, 10.0);
        let space = SearchSpace {
            mu1: (0.48, 0.48),
            mu2: (0.12, 0.12),
            p_mu1: (0.7, 0.7),
            p_z_alice: (0.5, 0.5),
        };
        let result = optimize_parameters(&cfg, &link, &space, 86_400.0);
        assert_eq!(result.mu1, 0.48);
        assert_eq!(result.mu2, 0.12);
        assert_eq!(result.p_mu1, 0.7);
        assert_eq!(result.p_z_alice, 0.5);
        assert!(result.feasible);
    }
}
