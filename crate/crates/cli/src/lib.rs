//! Library side of the `mocha` binary: configuration loading and the
//! subcommands.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// Exit code 1 for bad input, 2 for failures after work has started.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "mocha", version, about = "Multi-objective SKILL.md optimizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one optimization and write its report directory.
    Run {
        /// TOML run configuration; built-in defaults when omitted.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Overwrite an existing report in the output directory.
        #[arg(long)]
        force: bool,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        print_config: bool,
        /// Config overrides as `--key=value` or `--key value`; a bare key
        /// works when it names a unique setting.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
        overrides: Vec<String>,
    },
    /// Summarize run directories as CSV, one row per run.
    Report {
        /// Run directories, `pool.json` files, or directories of runs.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the compliance report for a SKILL.md.
    ValidateSkill {
        path: PathBuf,
        #[arg(long, default_value_t = 1024)]
        description_limit: usize,
        #[arg(long, default_value_t = 5000)]
        body_limit: usize,
    },
    /// Print the Pareto front of a finished run.
    Front {
        /// Run directory or `pool.json`.
        path: PathBuf,
    },
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Run {
            config,
            force,
            print_config,
            overrides,
        } => {
            let cfg = config::RunConfig::load(config.as_deref(), &overrides)?;
            if print_config {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            commands::run(&cfg, force)
        }
        Command::Report { paths, output } => {
            let rows = commands::report_rows(&paths);
            if rows.is_empty() {
                return Err(CliError::Usage("no readable runs found".into()));
            }
            match output {
                Some(p) => {
                    let file = std::fs::File::create(&p)
                        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", p.display())))?;
                    commands::write_report(&rows, &mut std::io::BufWriter::new(file))
                }
                None => commands::write_report(&rows, &mut stdout),
            }
        }
        Command::ValidateSkill {
            path,
            description_limit,
            body_limit,
        } => commands::validate_skill(
            &path,
            mocha_core::ComplianceLimits {
                description: description_limit,
                body: body_limit,
            },
            &mut stdout,
        ),
        Command::Front { path } => commands::front(&path, &mut stdout),
    }
}
