//! Batch command-line pipeline: `synth`, `ingest`, `cluster`, `boundaries`,
//! `assign` and `report`, all driven by one flat [`config::RunConfig`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "turbine-states",
    version,
    about = "Operational-state detection in turbine SCADA data",
    after_help = "Any configuration key can be overridden as --key=value, e.g. --clusters=4 --v_nom_reference=12."
)]
pub struct Cli {
    /// Configuration file with one key=value per line.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic dataset.
    Synth,
    /// Resample and segment the input data, dump correlation matrices.
    Ingest,
    /// Cluster each turbine's correlation matrices.
    Cluster,
    /// Fit wind-speed state boundaries from the cluster labels.
    Boundaries,
    /// Assign model states and report allocation changes.
    Assign,
    /// Summarize the artifacts in the output directory.
    Report,
}

const FLAGS: [&str; 5] = ["config", "seed", "out", "help", "version"];

/// Split `--key=value` config overrides from the arguments clap handles.
fn split_overrides(args: Vec<OsString>) -> (Vec<OsString>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        let pair = a.to_str().and_then(|s| s.strip_prefix("--")).and_then(|s| s.split_once('='));
        match pair {
            Some((k, v)) if !FLAGS.contains(&k) => overrides.push((k.to_string(), v.to_string())),
            _ => rest.push(a),
        }
    }
    (rest, overrides)
}

pub fn build_config(cli: &Cli, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<String, CliError> {
    use crate::commands::*;
    Ok(match command {
        Command::Synth => {
            let out = cmd_synth(cfg)?;
            format!("wrote {} files to {}", out.files.len(), cfg.out.display())
        }
        Command::Ingest => format!("ingested {} epochs", cmd_ingest(cfg)?),
        Command::Cluster => {
            let out = cmd_cluster(cfg)?;
            format!(
                "clustered {} epochs of {} turbines",
                out.rows.len(),
                out.clusterings.len()
            )
        }
        Command::Boundaries => {
            let b = cmd_boundaries(cfg)?.pooled;
            let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            format!("v1={} v2={} v_nom={}", f(b.v1), f(b.v2), f(b.v_nom))
        }
        Command::Assign => {
            let out = cmd_assign(cfg)?;
            let pooled = out.rates.iter().find(|r| r.turbine == "*");
            match pooled {
                Some(r) => format!("allocation change rate {:.4} over {} epochs", r.rate, r.epochs),
                None => String::new(),
            }
        }
        Command::Report => cmd_report(cfg)?,
    })
}

/// Parse `args` (including the program name), run the command and return the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let (args, overrides) = split_overrides(args.into_iter().map(Into::into).collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = build_config(&cli, &overrides).and_then(|cfg| execute(cli.command, &cfg));
    match result {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{}", msg.trim_end());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
