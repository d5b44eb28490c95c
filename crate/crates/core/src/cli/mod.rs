//! The `csi-sense` command line: synth, filter, augment, train, eval,
//! report and e2e.
//!
//! Flags override the `--config` file, which overrides built-in defaults.
//! Exit codes: 0 success, 1 stage failure or unmet threshold, 2 missing
//! input file (and usage errors).

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    check_thresholds, cmd_augment, cmd_eval, cmd_filter, cmd_report, cmd_synth, cmd_train, net_config, summary_table,
    DataFile, DataManifest, Layout, SplitManifest, MANIFEST,
};
pub use config::{AugmentConfig, FilterConfig, RunConfig, SynthConfig, Thresholds, TrainSection};

use crate::error::Error;
use crate::eval::TaskReport;
use crate::net::{Scale, TaskSelection, Variant};

#[derive(Debug, Clone, Parser)]
#[command(name = "csi-sense", version, about = "Synthesize WiFi CSI, train the sensing network and evaluate it")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, value_enum)]
    pub task: Option<TaskSelection>,
    #[arg(long, global = true, value_enum)]
    pub variant: Option<Variant>,
    #[arg(long, global = true, value_enum)]
    pub scale: Option<Scale>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run root; stage directories are created beneath it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "CSI_SENSE_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write one CSI1 file per subject or class.
    Synth,
    /// Denoise the synthesized files.
    Filter,
    /// Split chronologically and augment the training part.
    Augment,
    /// Train the network and write a checkpoint.
    Train,
    /// Evaluate the checkpoint and export metrics.
    Eval,
    /// Print the metrics as a table.
    Report,
    /// Run every stage and check the thresholds.
    E2e,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Filter => "filter",
            Command::Augment => "augment",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Report => "report",
            Command::E2e => "e2e",
        }
    }
}

/// A failed stage and its cause.
#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        match &self.source {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }
}

fn stage<T>(name: &'static str, r: crate::Result<T>) -> Result<T, StageError> {
    r.map_err(|source| StageError { stage: name, source })
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, StageError> {
        let mut cfg = match &self.config {
            Some(path) => stage("config", RunConfig::load(path))?,
            None => RunConfig::default(),
        };
        if let Some(t) = self.task {
            cfg.task = t;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(s) = self.scale {
            cfg.scale = s;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        stage("config", cfg.validate())?;
        Ok(cfg)
    }
}

/// Result of [`cmd_e2e`].
#[derive(Debug, Clone, PartialEq)]
pub struct E2eOutcome {
    pub reports: Vec<TaskReport>,
    pub table: String,
    /// Unmet thresholds; empty means the run passed.
    pub failures: Vec<String>,
}

impl E2eOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Every stage in order, then the threshold check.
pub fn cmd_e2e(cfg: &RunConfig) -> Result<E2eOutcome, StageError> {
    stage("synth", cmd_synth(cfg))?;
    stage("filter", cmd_filter(cfg))?;
    stage("augment", cmd_augment(cfg))?;
    stage("train", cmd_train(cfg))?;
    let reports = stage("eval", cmd_eval(cfg))?;
    let table = stage("report", cmd_report(cfg))?;
    let failures = reports.iter().flat_map(|r| check_thresholds(r, &cfg.thresholds)).collect();
    Ok(E2eOutcome {
        reports,
        table,
        failures,
    })
}

/// Runs one command and returns its one-line (or table) summary.
pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<(String, bool), StageError> {
    let name = command.name();
    Ok(match command {
        Command::Synth => {
            let m = stage(name, cmd_synth(cfg))?;
            (format!("synth: {} files in {}", m.files.len(), Layout::new(&cfg.out).data().display()), true)
        }
        Command::Filter => {
            let m = stage(name, cmd_filter(cfg))?;
            (format!("filter: {} files in {}", m.files.len(), Layout::new(&cfg.out).filtered().display()), true)
        }
        Command::Augment => {
            let s = stage(name, cmd_augment(cfg))?;
            (format!("augment: {} train ({}), {} test", s.n_train, s.train_file, s.n_test), true)
        }
        Command::Train => {
            let m = stage(name, cmd_train(cfg))?;
            (format!("train: {} instances, checkpoint {}", m.n_train, Layout::new(&cfg.out).checkpoint().display()), true)
        }
        Command::Eval => {
            let r = stage(name, cmd_eval(cfg))?;
            (summary_table(&r, &cfg.thresholds), true)
        }
        Command::Report => (stage(name, cmd_report(cfg))?, true),
        Command::E2e => {
            let o = cmd_e2e(cfg)?;
            let mut text = o.table.clone();
            for f in &o.failures {
                text.push_str(&format!("threshold not met: {f}\n"));
            }
            let passed = o.passed();
            (text, passed)
        }
    })
}

/// Parses, configures the thread pool, runs, prints, and returns the exit
/// code.
pub fn run(cli: &Cli) -> i32 {
    let result = cli.resolve().and_then(|cfg| match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| StageError {
                    stage: "config",
                    source: Error::Config(format!("thread pool: {e}")),
                })?;
            pool.install(|| dispatch(cli.command, &cfg))
        }
        None => dispatch(cli.command, &cfg),
    });
    match result {
        Ok((text, passed)) => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            if passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary and for tests driving the CLI in-process.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}
