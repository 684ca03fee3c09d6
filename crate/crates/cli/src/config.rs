//! Run-configuration files.
//!
//! A run config is a TOML document with a versioned `schema` string and
//! sections mirroring the model layers: `[protocol]`, `[channel]`,
//! `[receiver]`, `[detector]`, `[link]`, `[security]` and `[run]`. Every
//! key is optional and falls back to the stock profile; unknown keys are
//! rejected in strict mode (the default) and warned about in lax mode.

use std::path::Path;

use qkd_core::finitekey::SecurityParams;
use qkd_core::link::{ChannelModel, LinkModel, ReceiverModel, ReceiverVariant};
use qkd_core::profile;
use qkd_core::protocol::ProtocolConfig;
use toml::value::{Table, Value};

use crate::{Failure, FailureKind};

pub const SCHEMA: &str = "qkdsim/1";

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub protocol: ProtocolConfig,
    pub link: LinkModel,
    pub security: SecurityParams,
    pub seed: u64,
    /// Simulate a fixed wall-clock duration instead of one full block.
    pub duration_s: Option<f64>,
    /// Wall-clock cap when accumulating a block.
    pub max_block_duration_s: f64,
}

impl RunConfig {
    pub fn variant(&self) -> profile::Variant {
        if self.link.receiver.is_pic() {
            profile::Variant::Pic
        } else {
            profile::Variant::FiberPll
        }
    }
}

fn usage(message: String) -> Failure {
    Failure {
        kind: FailureKind::Usage,
        message,
    }
}

/// Known keys per section; anything else is an unknown-key diagnostic.
const TOP_KEYS: &[&str] = &[
    "schema", "protocol", "channel", "receiver", "detector", "link", "security", "run",
];
const PROTOCOL_KEYS: &[&str] = &[
    "p_z_alice",
    "p_z_bob",
    "mu1",
    "mu2",
    "p_mu1",
    "n_z_block",
    "f_ec",
    "wavelength_nm",
    "timing",
];
const TIMING_KEYS: &[&str] = &[
    "state_period_ps",
    "bin_delay_ps",
    "inter_state_gap_ps",
    "state_rate_hz",
    "pattern_length",
    "frame_rate_hz",
];
const CHANNEL_KEYS: &[&str] = &["attenuation_db"];
const RECEIVER_KEYS: &[&str] = &[
    "variant",
    "z_path_loss_db",
    "imzi_insertion_loss_db",
    "visibility",
    "residual_visibility_jitter",
    "pll_noise_rate_hz",
    "drift_std_rad_per_sqrt_hour",
    "recalibration_interval_s",
    "recalibration_dead_time_s",
];
const DETECTOR_KEYS: &[&str] = &[
    "efficiency",
    "dark_rate_hz",
    "jitter_fwhm_ps",
    "gate_width_ps",
];
const LINK_KEYS: &[&str] = &["extinction_error"];
const SECURITY_KEYS: &[&str] = &["eps_sec", "eps_corr", "eps_partition"];
const RUN_KEYS: &[&str] = &["seed", "duration_s", "max_block_duration_s"];

fn check_keys(table: &Table, known: &[&str], path: &str, strict: bool) -> Result<(), Failure> {
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            let full = if path.is_empty() {
                key.clone()
            } else {
                format!("{path}.{key}")
            };
            let message = format!("unknown configuration key `{full}`");
            if strict {
                return Err(usage(format!(
                    "{message} (strict mode; known keys: {known:?})"
                )));
            }
            eprintln!("warning: {message} ignored (lax mode)");
        }
    }
    Ok(())
}

struct Section<'a> {
    table: Option<&'a Table>,
    path: &'static str,
}

impl<'a> Section<'a> {
    fn value(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, Failure> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(other) => Err(usage(format!(
                "`{}.{key}` must be a number, got {other}",
                self.path
            ))),
        }
    }

    fn u64(&self, key: &str) -> Result<Option<u64>, Failure> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(other) => Err(usage(format!(
                "`{}.{key}` must be a nonnegative integer, got {other}",
                self.path
            ))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>, Failure> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::String(v)) => Ok(Some(v.as_str())),
            Some(other) => Err(usage(format!(
                "`{}.{key}` must be a string, got {other}",
                self.path
            ))),
        }
    }
}

fn section<'a>(
    root: &'a Table,
    name: &'static str,
    strict: bool,
    keys: &[&str],
) -> Result<Section<'a>, Failure> {
    match root.get(name) {
        None => Ok(Section {
            table: None,
            path: name,
        }),
        Some(Value::Table(t)) => {
            check_keys(t, keys, name, strict)?;
            Ok(Section {
                table: Some(t),
                path: name,
            })
        }
        Some(other) => Err(usage(format!("`{name}` must be a table, got {other}"))),
    }
}

macro_rules! apply {
    ($target:expr, $section:expr, $key:literal) => {
        if let Some(v) = $section.f64($key)? {
            $target = v;
        }
    };
}

/// Load and resolve a run configuration file.
pub fn load(path: &Path, strict: bool) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let root: Table = toml::from_str(&text)
        .map_err(|e| usage(format!("config {} is not valid TOML: {e}", path.display())))?;
    check_keys(&root, TOP_KEYS, "", strict)?;

    match root.get("schema") {
        Some(Value::String(s)) if s == SCHEMA => {}
        Some(Value::String(s)) => {
            return Err(usage(format!(
                "unsupported schema {s:?}; this build reads {SCHEMA:?}"
            )))
        }
        _ => {
            return Err(usage(format!(
                "config must declare `schema = \"{SCHEMA}\"` at the top"
            )))
        }
    }

    let mut protocol = ProtocolConfig::default();
    let proto = section(&root, "protocol", strict, PROTOCOL_KEYS)?;
    apply!(protocol.p_z_alice, proto, "p_z_alice");
    apply!(protocol.p_z_bob, proto, "p_z_bob");
    apply!(protocol.intensities.mu1, proto, "mu1");
    apply!(protocol.intensities.mu2, proto, "mu2");
    apply!(protocol.intensities.p_mu1, proto, "p_mu1");
    apply!(protocol.f_ec, proto, "f_ec");
    apply!(protocol.wavelength_nm, proto, "wavelength_nm");
    if let Some(v) = proto.u64("n_z_block")? {
        protocol.n_z_block = v;
    }
    if let Some(Value::Table(t)) = proto.value("timing") {
        check_keys(t, TIMING_KEYS, "protocol.timing", strict)?;
        let timing = Section {
            table: Some(t),
            path: "protocol.timing",
        };
        if let Some(v) = timing.u64("state_period_ps")? {
            protocol.timing.state_period_ps = v;
        }
        if let Some(v) = timing.u64("bin_delay_ps")? {
            protocol.timing.bin_delay_ps = v;
        }
        if let Some(v) = timing.u64("inter_state_gap_ps")? {
            protocol.timing.inter_state_gap_ps = v;
        }
        apply!(protocol.timing.state_rate_hz, timing, "state_rate_hz");
        apply!(protocol.timing.frame_rate_hz, timing, "frame_rate_hz");
        if let Some(v) = timing.u64("pattern_length")? {
            protocol.timing.pattern_length = v as usize;
        }
    }

    let security_section = section(&root, "security", strict, SECURITY_KEYS)?;
    if let Some(v) = security_section.f64("eps_sec")? {
        protocol.eps_sec = v;
    }
    if let Some(v) = security_section.f64("eps_corr")? {
        protocol.eps_corr = v;
    }
    let mut security = SecurityParams::new(protocol.eps_sec, protocol.eps_corr);
    if let Some(v) = security_section.f64("eps_partition")? {
        security.eps_partition = v;
    }

    let receiver_section = section(&root, "receiver", strict, RECEIVER_KEYS)?;
    let variant = match receiver_section.string("variant")? {
        None | Some("pic") => profile::Variant::Pic,
        Some("fiber_pll") | Some("fiber") => profile::Variant::FiberPll,
        Some(other) => {
            return Err(usage(format!(
                "`receiver.variant` must be \"pic\" or \"fiber_pll\", got {other:?}"
            )))
        }
    };
    let receiver = resolve_receiver(variant, &receiver_section)?;

    let mut detector = profile::detector();
    let det = section(&root, "detector", strict, DETECTOR_KEYS)?;
    apply!(detector.efficiency, det, "efficiency");
    apply!(detector.dark_rate_hz, det, "dark_rate_hz");
    apply!(detector.jitter_fwhm_ps, det, "jitter_fwhm_ps");
    apply!(detector.gate_width_ps, det, "gate_width_ps");

    let mut attenuation_db = 10.0;
    let channel = section(&root, "channel", strict, CHANNEL_KEYS)?;
    apply!(attenuation_db, channel, "attenuation_db");

    let mut extinction_error = 0.005;
    let link_section = section(&root, "link", strict, LINK_KEYS)?;
    apply!(extinction_error, link_section, "extinction_error");

    let run = section(&root, "run", strict, RUN_KEYS)?;
    let seed = run.u64("seed")?.unwrap_or(1);
    let duration_s = run.f64("duration_s")?;
    let max_block_duration_s = run.f64("max_block_duration_s")?.unwrap_or(86_400.0);
    if !max_block_duration_s.is_finite() || max_block_duration_s <= 0.0 {
        return Err(usage(
            "`run.max_block_duration_s` must be positive".to_string(),
        ));
    }

    let link = LinkModel {
        channel: ChannelModel::new(attenuation_db),
        receiver,
        detector,
        extinction_error,
    };
    protocol
        .validate()
        .map_err(|e| usage(format!("invalid protocol section: {e}")))?;
    link.validate(&protocol.timing)
        .map_err(|e| usage(format!("invalid link model: {e}")))?;

    Ok(RunConfig {
        protocol,
        link,
        security,
        seed,
        duration_s,
        max_block_duration_s,
    })
}

fn resolve_receiver(
    variant: profile::Variant,
    section: &Section<'_>,
) -> Result<ReceiverModel, Failure> {
    let mut receiver = profile::receiver(variant);
    apply!(receiver.z_path_loss_db, section, "z_path_loss_db");
    apply!(
        receiver.imzi_insertion_loss_db,
        section,
        "imzi_insertion_loss_db"
    );
    apply!(receiver.visibility, section, "visibility");
    match receiver.variant {
        ReceiverVariant::Pic {
            ref mut residual_visibility_jitter,
        } => {
            if let Some(v) = section.f64("residual_visibility_jitter")? {
                *residual_visibility_jitter = v;
            }
            for key in [
                "pll_noise_rate_hz",
                "drift_std_rad_per_sqrt_hour",
                "recalibration_interval_s",
                "recalibration_dead_time_s",
            ] {
                if section.value(key).is_some() {
                    return Err(usage(format!(
                        "`receiver.{key}` only applies to the fiber_pll variant"
                    )));
                }
            }
        }
        ReceiverVariant::FiberPll {
            ref mut pll_noise_rate_hz,
            ref mut drift_std_rad_per_sqrt_hour,
            ref mut recalibration_interval_s,
            ref mut recalibration_dead_time_s,
        } => {
            if let Some(v) = section.f64("pll_noise_rate_hz")? {
                *pll_noise_rate_hz = v;
            }
            if let Some(v) = section.f64("drift_std_rad_per_sqrt_hour")? {
                *drift_std_rad_per_sqrt_hour = v;
            }
            if let Some(v) = section.f64("recalibration_interval_s")? {
                *recalibration_interval_s = v;
            }
            if let Some(v) = section.f64("recalibration_dead_time_s")? {
                *recalibration_dead_time_s = v;
            }
            if section.value("residual_visibility_jitter").is_some() {
                return Err(usage(
                    "`receiver.residual_visibility_jitter` only applies to the pic variant"
                        .to_string(),
                ));
            }
        }
    }
    Ok(receiver)
}
