//! Command-line driver: reads a TOML experiment, dispatches to `fmm-lab`,
//! and writes CSV tables plus a JSON envelope tagged with the config hash.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod contract;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use fmm_lab::DensityKind;

use crate::commands::{dispatch, Ctx, Report};
use crate::config::{ExperimentConfig, Format};
use crate::error::{CliError, Result};
use crate::output::{json_bytes, persist, Envelope, Meta, Verdict};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("FMM_LAB_GIT_DESCRIBE"), ")");

#[derive(Debug, Parser)]
#[command(name = "fmm-lab", version = VERSION, about = "Fractional-moment experiments for one-dimensional alloy-type models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "FMM_LAB_THREADS")]
    pub threads: Option<usize>,
    /// Print the result envelope on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Single-site potential, comma separated (overrides `model.u`).
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub u: Option<Vec<f64>>,
    #[arg(long, global = true, value_parser = parse_kind)]
    pub density: Option<DensityKind>,
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    #[arg(long, global = true)]
    pub s: Option<f64>,
    #[arg(long, global = true)]
    pub samples: Option<u64>,
}

fn parse_kind(s: &str) -> std::result::Result<DensityKind, String> {
    DensityKind::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Closed-form constants, thresholds and masses.
    Constants,
    /// Fractional determinant averages against both bounds.
    DetAverage,
    /// Exact resolvent identities on random boxes.
    VerifyIdentities,
    /// Fractional-moment decay profile and rate fit.
    FmDecay,
    /// A-priori moment bound over a site/energy grid.
    Apriori,
    /// Conditional single-coupling moment bound.
    ConditionalCheck,
    /// Eigenvalue counts against the Wegner-type bound.
    Wegner,
    /// Two-box regularity probability.
    Regularity,
    /// Eigenfunction decay rates.
    EigenDecay,
    /// Positive block combination and monotone moment bound.
    Monotone,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::DetAverage => "det-average",
            Command::VerifyIdentities => "verify-identities",
            Command::FmDecay => "fm-decay",
            Command::Apriori => "apriori",
            Command::ConditionalCheck => "conditional-check",
            Command::Wegner => "wegner",
            Command::Regularity => "regularity",
            Command::EigenDecay => "eigen-decay",
            Command::Monotone => "monotone",
        }
    }
}

/// Config file plus command-line overrides.
pub fn effective_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(u) = &g.u {
        cfg.model.u = u.clone();
    }
    if let Some(k) = g.density {
        cfg.model.density.kind = k;
    }
    if let Some(r) = g.radius {
        cfg.model.density.radius = r;
    }
    if let Some(seed) = g.seed {
        cfg.model.seed = seed;
    }
    if let Some(s) = g.s {
        cfg.run.s = Some(s);
    }
    if let Some(n) = g.samples {
        cfg.run.n_samples = Some(n);
    }
    if let Some(dir) = &g.out {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

pub struct Outcome {
    pub command: Command,
    pub config_hash: String,
    pub report: Report,
    pub envelope: Vec<u8>,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.report.verdict.exit_code()
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let started = Instant::now();
    let cfg = effective_config(&cli.global)?;
    let name = cli.command.name();
    let hash = cfg.hash(name)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.global.threads {
        if t == 0 {
            return Err(CliError::invalid("--threads", "must be at least 1"));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Threads(e.to_string()))?;
    let threads = pool.current_num_threads();
    let report = pool.install(|| {
        let cx = Ctx::new(&cfg, &hash)?;
        dispatch(cli.command, &cx)
    })?;

    let envelope = json_bytes(
        "envelope",
        &Envelope {
            command: name,
            config_hash: &hash,
            version: VERSION,
            resample_count: report.resample_count,
            verdict: report.verdict,
            result: &report.result,
        },
    )?;
    let mut files = Vec::new();
    if cfg.output.wants(Format::Csv) {
        files.extend(report.tables.iter().map(|t| (t.file.to_string(), t.bytes.clone())));
    }
    if cfg.output.wants(Format::Json) {
        files.push((format!("{name}.json"), envelope.clone()));
    }
    files.push((contract::CONFIG_ARCHIVE.into(), cfg.to_toml()?.into_bytes()));
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let meta = Meta {
        config_hash: &hash,
        version: VERSION,
        timestamp_unix: now,
        wall_seconds: started.elapsed().as_secs_f64(),
        threads,
    };
    files.push((contract::META_FILE.into(), json_bytes("meta", &meta)?));
    let written = persist(&cfg.output.dir, &files)?;
    Ok(Outcome { command: cli.command, config_hash: hash, report, envelope, written })
}

/// Parse, run and report; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::invalid("<command line>", e.kind());
            eprintln!("error: {err}");
            let _ = e.print();
            return 1;
        }
    };
    match run(&cli) {
        Ok(out) => {
            if cli.global.json {
                print!("{}", String::from_utf8_lossy(&out.envelope));
            } else if out.command == Command::Monotone {
                println!("{}", out.report.result);
            } else {
                println!("{}: {}", out.command.name(), out.report.summary);
                let verdict = match out.report.verdict {
                    Verdict::Pass => "pass",
                    Verdict::Fail => "FAIL",
                    Verdict::NotAsserted => "not asserted",
                };
                println!("verdict: {verdict}; config {}", &out.config_hash[..12]);
                for p in &out.written {
                    println!("  wrote {}", p.display());
                }
            }
            out.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
