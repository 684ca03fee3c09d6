//! `qkdsim` — deterministic simulation, analysis, sweep, optimization and
//! stability workflows for a three-state time-bin BB84 link.
//!
//! Exit codes: 0 success with a positive key (or a completed non-key
//! workflow), 1 usage/configuration/IO error, 2 valid run that yields no
//! positive key, 3 tag-stream parse or alignment failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qkd_core::timetag::StreamFormat;

use commands::Outcome;

#[derive(Debug)]
pub enum FailureKind {
    /// Configuration, usage or IO problems.
    Usage,
    /// Tag-stream parse or alignment problems.
    Stream,
}

/// A command failure carrying its exit-code class.
#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Pic,
    Fiber,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TagFormatArg {
    Text,
    Binary,
}

impl From<TagFormatArg> for StreamFormat {
    fn from(value: TagFormatArg) -> Self {
        match value {
            TagFormatArg::Text => StreamFormat::Text,
            TagFormatArg::Binary => StreamFormat::Binary,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "qkdsim",
    version,
    about = "Time-bin BB84 link simulator and analysis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Reject unknown configuration keys (default behavior).
    #[arg(long, global = true, conflicts_with = "lax")]
    strict: bool,

    /// Warn about unknown configuration keys instead of rejecting them.
    #[arg(long, global = true)]
    lax: bool,

    /// Omit the generation timestamp so reruns are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,

    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Override the root seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo one acquisition block and analyze it.
    Simulate {
        /// Run configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Also write the raw time-tag stream to this path.
        #[arg(long)]
        emit_tags: Option<PathBuf>,
        /// On-disk format for --emit-tags.
        #[arg(long, value_enum, default_value = "binary")]
        tag_format: TagFormatArg,
    },
    /// Analyze a recorded time-tag stream offline.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Tag stream to ingest (text or binary; detected automatically).
        #[arg(long)]
        tags: PathBuf,
        /// Rolling-QBER window in seconds (default: 1/20 of the block).
        #[arg(long)]
        window: Option<f64>,
    },
    /// Expected key rate versus channel attenuation.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated attenuations in dB, e.g. 0,5,10,15.
        #[arg(long)]
        attenuations: String,
        /// Which receiver build(s) to sweep.
        #[arg(long, value_enum, default_value = "both")]
        variant: VariantArg,
    },
    /// Search intensities and basis bias for the best key rate.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Signal intensity range LO:HI.
        #[arg(long)]
        mu1: Option<String>,
        /// Decoy intensity range LO:HI.
        #[arg(long)]
        mu2: Option<String>,
        /// Signal-intensity probability range LO:HI.
        #[arg(long)]
        p_mu1: Option<String>,
        /// Z-basis bias range LO:HI.
        #[arg(long)]
        p_z: Option<String>,
    },
    /// Interferometer stability series for both builds.
    Stability {
        #[arg(long)]
        config: PathBuf,
        /// Simulated duration in seconds.
        #[arg(long)]
        duration: f64,
        /// Error-rate window in seconds.
        #[arg(long)]
        window: f64,
        /// Drift sample spacing in seconds.
        #[arg(long, default_value_t = 10.0)]
        sample_interval: f64,
        #[arg(long, value_enum, default_value = "both")]
        variant: VariantArg,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not failures; everything else is usage.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NoPositiveKey) => ExitCode::from(2),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            match failure.kind {
                FailureKind::Usage => ExitCode::from(1),
                FailureKind::Stream => ExitCode::from(3),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<Outcome, Failure> {
    let strict = !cli.lax;
    let with_timestamp = !cli.no_timestamp;
    std::fs::create_dir_all(&cli.out).map_err(|e| Failure {
        kind: FailureKind::Usage,
        message: format!("cannot create output directory {}: {e}", cli.out.display()),
    })?;
    let load = |path: &PathBuf| -> Result<config::RunConfig, Failure> {
        let mut cfg = config::load(path, strict)?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    };
    match &cli.command {
        Command::Simulate {
            config,
            emit_tags,
            tag_format,
        } => {
            let cfg = load(config)?;
            commands::simulate::run(
                &cfg,
                &cli.out,
                emit_tags.as_deref(),
                (*tag_format).into(),
                with_timestamp,
            )
        }
        Command::Analyze {
            config,
            tags,
            window,
        } => {
            let cfg = load(config)?;
            commands::analyze::run(&cfg, tags, &cli.out, *window, with_timestamp)
        }
        Command::Sweep {
            config,
            attenuations,
            variant,
        } => {
            let cfg = load(config)?;
            let list = commands::sweep::parse_attenuations(attenuations)?;
            commands::sweep::run(&cfg, &cli.out, &list, *variant)
        }
        Command::Optimize {
            config,
            mu1,
            mu2,
            p_mu1,
            p_z,
        } => {
            let cfg = load(config)?;
            let parse = |flag: &str, v: &Option<String>| -> Result<Option<(f64, f64)>, Failure> {
                v.as_deref()
                    .map(|s| commands::optimize::parse_range(flag, s))
                    .transpose()
            };
            let ranges = commands::optimize::RangeOverrides {
                mu1: parse("--mu1", mu1)?,
                mu2: parse("--mu2", mu2)?,
                p_mu1: parse("--p-mu1", p_mu1)?,
                p_z: parse("--p-z", p_z)?,
            };
            commands::optimize::run(&cfg, &cli.out, ranges, with_timestamp)
        }
        Command::Stability {
            config,
            duration,
            window,
            sample_interval,
            variant,
        } => {
            let cfg = load(config)?;
            commands::stability::run(
                &cfg,
                &cli.out,
                *duration,
                *window,
                *sample_interval,
                *variant,
            )
        }
    }
}
