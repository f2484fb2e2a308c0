mod args;
mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, SimlabCommand, SmokingCommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing arguments; exit code 2.
    Usage(String),
    /// A pipeline error; exit code 1.
    Module(mortproj::Error),
    Io { path: PathBuf, source: std::io::Error },
    /// A run directory whose files no longer match its manifest.
    Integrity(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn payload(&self) -> serde_json::Value {
        let (kind, message) = match self {
            CliError::Usage(m) => ("Usage", m.clone()),
            CliError::Module(e) => (e.kind(), e.to_string()),
            CliError::Io { path, source } => ("Io", format!("{}: {source}", path.display())),
            CliError::Integrity(m) => ("ManifestMismatch", m.clone()),
        };
        serde_json::json!({ "error": kind, "message": message })
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl From<mortproj::Error> for CliError {
    fn from(e: mortproj::Error) -> Self {
        CliError::Module(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Module(e.into())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Smoking(SmokingCommand::Backcast(a)) => commands::smoking_backcast(a),
        Command::Aad(a) => commands::aad(a),
        Command::Fit(a) => commands::fit(a),
        Command::Select(a) => commands::select(a),
        Command::Project(a) => commands::project(a),
        Command::Scenario(a) => commands::scenario(a),
        Command::Excess(a) => commands::excess(a),
        Command::Residuals(a) => commands::residuals(a),
        Command::Simlab(SimlabCommand::Generate(a)) => commands::simlab_generate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.payload());
            ExitCode::from(e.exit_code())
        }
    }
}
