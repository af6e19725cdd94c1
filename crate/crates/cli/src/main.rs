use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use genrelay_cli::{document, run_document, validate, CliError, Overrides};

#[derive(Parser)]
#[command(name = "genrelay", version, about = "Generative relay initialization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its artifacts.
    Run {
        /// learn | operate | discover | experiment.width | experiment.adherence |
        /// experiment.optimal-budget | experiment.tables
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for experiments; 0 uses every core. Results do not
        /// depend on it.
        #[arg(long)]
        workers: Option<usize>,
        /// Dotted `key=value` override, repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Check a config without executing it; prints diagnostics as JSON.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.record());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            scenario,
            config,
            seed,
            out,
            workers,
            set,
        } => {
            let overrides = Overrides {
                scenario,
                seed,
                out,
                workers,
                set,
            };
            let result = document(config.as_deref(), &overrides).and_then(|(doc, base)| run_document(&doc, &base));
            match result {
                Ok(summary) => {
                    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Validate { config, set } => {
            let overrides = Overrides {
                set,
                ..Overrides::default()
            };
            match document(Some(&config), &overrides) {
                Ok((doc, base)) => {
                    let diags = validate(&doc, &base);
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&diags).expect("diagnostics serialize")
                    );
                    if diags.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => fail(e),
            }
        }
    }
}
