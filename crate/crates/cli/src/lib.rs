//! Batch front end of the fracheat laboratory: configuration, subcommand dispatch, result files
//! and run manifests.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{CommandFactory, Parser};
use serde_json::json;

use crate::commands::Command;
use crate::config::{load_config, RawConfig, RunConfig};
use crate::error::CliError;
use crate::output::{input_hash, versions, OutputEntry, Writer};

#[derive(Debug, Parser)]
#[command(name = "fracheat", version, about = "Numerical lab for the stochastic heat equation with fractional-colored noise")]
pub struct Cli {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// One of rough1d, boundary1d, smooth1d.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to FRACHEAT_THREADS, then to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    #[arg(long, global = true)]
    pub abs_tol: Option<f64>,
    #[arg(long, global = true)]
    pub mc_samples: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    pub format: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    fn overrides(&self) -> RawConfig {
        RawConfig {
            preset: self.preset.clone(),
            seed: self.seed,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            mc_samples: self.mc_samples,
            output_dir: self.out.as_ref().map(|p| p.to_string_lossy().into_owned()),
            format: self.format.clone(),
            ..RawConfig::default()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("FRACHEAT_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("FRACHEAT_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn print_subcommand_help(args: &[OsString]) {
    let mut cmd = Cli::command();
    let name = args.iter().skip(1).filter_map(|a| a.to_str()).find(|a| cmd.find_subcommand(a).is_some());
    if let Some(name) = name {
        if let Some(sub) = cmd.find_subcommand_mut(name) {
            let _ = writeln!(std::io::stderr(), "{}", sub.render_help());
        }
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code: 0 on success, 1 when
/// a computation or one of its checks fails, 2 on usage and configuration errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                print_subcommand_help(&args);
            }
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            if e.exit_code() == 2 {
                print_subcommand_help(&args);
            }
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let threads = thread_count(cli.threads)?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A pool may already exist when several runs share one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let file = match &cli.config {
        Some(path) => load_config(path)?,
        None => RawConfig::default(),
    };
    let mut raw = file.merged(cli.overrides());
    if raw.preset.is_none() && raw.h.is_none() && cli.config.is_none() {
        raw.preset = Some("rough1d".into());
    }
    let cfg = RunConfig::resolve(raw)?;
    let inputs = json!({
        "subcommand": cli.command.name(),
        "arguments": &cli.command,
        "config": &cfg,
        "versions": versions(),
    });
    let hash = input_hash(&inputs);
    let mut writer = Writer::new(&cfg.output_dir, hash.clone(), cfg.format)?;
    let start = Instant::now();
    let outcome = cli.command.run(&cfg, &mut writer);
    if let Err(e) = &outcome {
        if !matches!(e, CliError::Assertion(_)) {
            return outcome;
        }
    }
    let outputs: Vec<OutputEntry> =
        writer.written.iter().map(|(file, sha256)| OutputEntry { file: file.clone(), sha256: sha256.clone() }).collect();
    let manifest = json!({
        "input_hash": hash,
        "subcommand": cli.command.name(),
        "arguments": &cli.command,
        "config": &cfg,
        "seed": cfg.seed,
        "versions": versions(),
        "threads": rayon::current_num_threads(),
        "output_dir": cfg.output_dir.to_string_lossy(),
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "status": if outcome.is_ok() { "passed" } else { "failed" },
        "outputs": outputs,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(cfg.output_dir.join(format!("{}.manifest.json", cli.command.name())), text)?;
    outcome
}
