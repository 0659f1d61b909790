//! `egocorr`: batch front-end for self-search in first-person videos.

mod args;
mod commands;
mod repository;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use egocorr::{Error, PipelineConfig};

use args::Cli;

/// Outcome of a subcommand: paths it wrote plus optional extra fields for
/// the final JSON line.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Outcome {
    pub fn with(mut self, key: &str, value: impl serde::Serialize) -> Self {
        self.extra.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }
}

fn load_config(cli: &Cli) -> egocorr::Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for assignment in &cli.set {
        config.apply_override(assignment)?;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = load_config(&cli).and_then(|config| commands::run(&cli.command, &config));
    match result {
        Ok(outcome) => {
            let mut line = serde_json::Map::new();
            line.insert("command".into(), cli.command.name().into());
            line.insert(
                "outputs".into(),
                outcome
                    .outputs
                    .iter()
                    .map(|p| serde_json::Value::from(p.display().to_string()))
                    .collect(),
            );
            line.extend(outcome.extra);
            println!("{}", serde_json::Value::Object(line));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) | Error::ConfigParse { .. } | Error::ConfigInvariant(_) => {
                    ExitCode::from(1)
                }
                _ => ExitCode::from(2),
            }
        }
    }
}
