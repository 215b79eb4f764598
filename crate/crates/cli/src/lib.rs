//! The `stance` command line tool.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod models;
pub mod output;

use std::ffi::OsString;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::Context;
use crate::config::PipelineConfig;
use crate::error::CliError;

/// Merges the config file with command line overrides.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(l) = cli.language {
        cfg.language = l.language();
    }
    if let Some(s) = cli.sigma_scope {
        cfg.analysis.sigma_scope = s.into();
    }
    if let Some(m) = cli.sigma_mode {
        cfg.analysis.sigma_mode = m.into();
    }
    if let Some(m) = cli.mean {
        cfg.evaluation.mean = m.into();
    }
    if let Some(o) = &cli.output {
        cfg.paths.output_dir = o.clone();
    }
    match &cli.command {
        Command::Train { corpus, kind } | Command::Evaluate { corpus, kind } => {
            if let Some(c) = corpus {
                cfg.paths.corpus = Some(c.clone());
            }
            if let Some(k) = kind {
                cfg.model.kind = (*k).into();
            }
        }
        Command::Analyze { booklet } => {
            if let Some(b) = booklet {
                cfg.paths.booklet = Some(b.clone());
            }
        }
        Command::Stats { corpus, booklet } => {
            // only what was asked for on the command line when either flag is given
            if corpus.is_some() || booklet.is_some() {
                cfg.paths.corpus = corpus.clone();
                cfg.paths.booklet = booklet.clone();
            }
        }
        Command::Predict { .. } => {}
    }
    cfg.propagate_seed();
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    let ctx = Context::new(cfg, cli.model.clone(), cli.output.is_some());
    log::info!("config hash {}", ctx.prov.config_hash);
    match &cli.command {
        Command::Train { .. } => commands::train(&ctx),
        Command::Evaluate { .. } => commands::evaluate(&ctx),
        Command::Predict { question, comment } => commands::predict(&ctx, question, comment),
        Command::Analyze { .. } => commands::analyze_booklet(&ctx),
        Command::Stats { .. } => commands::stats(&ctx),
    }
}

/// Runs the tool on `args` (program name first) and returns the exit code:
/// 0 success, 1 usage, 2 data, 3 model.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
