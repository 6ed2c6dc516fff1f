//! Command-line driver for `sirds-core`: stimulus generation, analyses, the session server and
//! scoring.

pub mod args;
pub mod commands;
pub mod server;

use args::{AnalyzeCommand, Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid arguments discovered after parsing (config files, geometry overrides).
    #[error("usage: {0}")]
    Usage(String),
    #[error("startup: {0}")]
    Startup(String),
    #[error(transparent)]
    Core(#[from] sirds_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Runs a parsed command. Batch commands print a JSON summary to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let summary = match cli.command {
        Command::Gen(a) => commands::cmd_gen(&a)?,
        Command::Analyze(AnalyzeCommand::Match(a)) => commands::cmd_match(&a)?,
        Command::Analyze(AnalyzeCommand::ScaleLaw(a)) => commands::cmd_scale_law(&a)?,
        Command::Score(a) => commands::cmd_score(&a)?,
        Command::Serve(a) => {
            let rt =
                tokio::runtime::Runtime::new().map_err(|e| CliError::Startup(e.to_string()))?;
            return rt.block_on(server::serve(&a.session, a.port, a.ui.as_deref()));
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).map_err(sirds_core::Error::from)?
    );
    Ok(())
}
