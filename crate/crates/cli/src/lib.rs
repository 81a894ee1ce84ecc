//! `afrelay` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 design stopped
//! at `max_iters`, 3 validation failure.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use afrelay::channel::ChannelPreset;
use afrelay::design::alternate;
use afrelay::matfmt::format_matrices;
use afrelay::simulate::{build_model, sweep, to_csv};
use afrelay::validate::{run_with, Hooks};
use clap::{Parser, Subcommand};

use crate::config::FileConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "afrelay",
    version,
    about = "Robust transceiver design for two-hop MIMO relay links"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for `design`, CSV file for `sweep`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Only errors reach stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run the alternating design at one operating point.
    Design,
    /// Bit-error-rate sweep over SNR and error variance.
    Sweep,
    /// Check the implementation against independent oracles.
    Validate,
}

/// Output streams of one invocation.
pub struct Io<'a> {
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

struct Failure(i32, String);

impl From<afrelay::Error> for Failure {
    fn from(e: afrelay::Error) -> Self {
        Failure(EXIT_USAGE, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(EXIT_USAGE, e.to_string())
    }
}

fn usage(msg: String) -> Failure {
    Failure(EXIT_USAGE, msg)
}

fn load_config(cli: &Cli) -> Result<FileConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(usage)?,
        None => FileConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    Ok(cfg)
}

pub fn cmd_design(cfg: &FileConfig, out: Option<&Path>, io: &mut Io) -> i32 {
    finish(design(cfg, out, io), io)
}

fn design(cfg: &FileConfig, out: Option<&Path>, io: &mut Io) -> Result<i32, Failure> {
    let point = cfg.design_point().map_err(usage)?;
    let preset = ChannelPreset::resolve(&point.preset)?;
    let model = build_model(
        &preset,
        &point.correlation,
        &point.budget,
        point.snr_sr_db,
        point.snr_rd_db,
        point.streams,
    )?;
    let outcome = alternate(&model, &point.budget, &point.design)?;
    let t = &outcome.transceiver;
    let matrices = format_matrices(&[
        ("precoder", &t.precoder),
        ("relay", &t.relay),
        ("equalizer", &t.equalizer),
    ]);
    let trace = outcome.trace.to_csv();
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("transceiver.txt"), matrices)?;
            fs::write(dir.join("trace.csv"), trace)?;
        }
        None => write!(io.stdout, "{matrices}\n{trace}")?,
    }
    if outcome.trace.converged {
        Ok(EXIT_OK)
    } else {
        let msg = format!(
            "design stopped after {} iterations; last change exceeds tol_mse {:e}",
            point.design.max_iters, point.design.tol_mse
        );
        Err(Failure(EXIT_NOT_CONVERGED, msg))
    }
}

pub fn cmd_sweep(cfg: &FileConfig, out: Option<&Path>, io: &mut Io) -> i32 {
    finish(run_sweep(cfg, out, io), io)
}

fn run_sweep(cfg: &FileConfig, out: Option<&Path>, io: &mut Io) -> Result<i32, Failure> {
    let points = sweep(&cfg.sweep())?;
    let csv = to_csv(&points);
    match out {
        Some(path) => fs::write(path, csv)?,
        None => io.stdout.write_all(csv.as_bytes())?,
    }
    Ok(EXIT_OK)
}

pub fn cmd_validate(cfg: &FileConfig, io: &mut Io) -> i32 {
    cmd_validate_with(cfg, &Hooks::default(), io)
}

/// [`cmd_validate`] against substituted implementations.
pub fn cmd_validate_with(cfg: &FileConfig, hooks: &Hooks, io: &mut Io) -> i32 {
    finish(validate(cfg, hooks, io), io)
}

fn validate(cfg: &FileConfig, hooks: &Hooks, io: &mut Io) -> Result<i32, Failure> {
    let report = run_with(&cfg.validation().map_err(usage)?, hooks)?;
    io.stdout.write_all(report.table().as_bytes())?;
    if report.all_passed() {
        Ok(EXIT_OK)
    } else {
        Err(Failure(
            EXIT_VALIDATION,
            format!("failed checks: {}", report.failed().join(", ")),
        ))
    }
}

fn finish(result: Result<i32, Failure>, io: &mut Io) -> i32 {
    match result {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            let _ = writeln!(io.stderr, "error: {msg}");
            code
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Warn
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, io: &mut Io) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                io.stderr.write_all(text.as_bytes())
            } else {
                io.stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    init_logging(cli.quiet);
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(f) => return finish(Err(f), io),
    };
    let out = cli.out.as_deref();
    match cli.command {
        Command::Design => cmd_design(&cfg, out, io),
        Command::Sweep => cmd_sweep(&cfg, out, io),
        Command::Validate => cmd_validate(&cfg, io),
    }
}
