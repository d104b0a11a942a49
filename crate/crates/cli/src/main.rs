use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod io;

use args::Cli;

/// Exit statuses: 0 ok, 1 usage, 2 data, 3 numerical.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(dissolve_gp::Error),
}

impl From<dissolve_gp::Error> for CliError {
    fn from(e: dissolve_gp::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(dissolve_gp::Error::Io(e))
    }
}

impl CliError {
    fn code(&self) -> u8 {
        use dissolve_gp::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::Config(_)) => 1,
            CliError::Core(E::Conditioning { .. } | E::Estimation(_) | E::DegreesOfFreedom(_)) => 3,
            CliError::Core(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        use dissolve_gp::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                E::Parse { .. } => "parse",
                E::Structure(_) => "structure",
                E::Range { .. } => "range",
                E::InsufficientReplication(_) => "insufficient-replication",
                E::Domain(_) => "domain",
                E::Conditioning { .. } => "conditioning",
                E::DegreesOfFreedom(_) => "degrees-of-freedom",
                E::Estimation(_) => "estimation",
                E::Config(_) => "config",
                E::Io(_) => "io",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

fn report(err: &CliError) -> ExitCode {
    let body = serde_json::json!({
        "error": { "kind": err.kind(), "message": err.message(), "exit_code": err.code() }
    });
    eprintln!("{body}");
    ExitCode::from(err.code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&CliError::Usage(e.render().to_string().trim().to_string())),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
