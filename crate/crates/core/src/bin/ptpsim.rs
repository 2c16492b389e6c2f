use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ptp_core::harness::{self, HarnessError, Scenario};

#[derive(Parser)]
#[command(name = "ptpsim", about = "Discrete-event simulator for multipath transport over a named-data network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario or a scenario file.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Directory for report.txt and the CSV series.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Set a scenario field, e.g. flow_defaults.probe_rate=5.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Exit with status 1 when an expectation fails.
        #[arg(long)]
        assert: bool,
    },
    /// List the built-in scenarios.
    List,
    /// Check a scenario file without running it.
    Validate { file: PathBuf },
}

const CONFIG_ERROR: u8 = 2;
const ASSERTION_FAILED: u8 = 1;

fn config_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(CONFIG_ERROR)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (name, text) in harness::BUILTINS {
                let desc = Scenario::parse(text).map(|s| s.description).unwrap_or_default();
                if writeln!(std::io::stdout(), "{name:<18} {desc}").is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Command::Validate { file } => {
            let text = match std::fs::read_to_string(&file) {
                Ok(t) => t,
                Err(e) => return config_error(format!("{}: {e}", file.display())),
            };
            match Scenario::parse(&text) {
                Ok(s) => {
                    println!("{}: ok ({} nodes, {} links)", s.name, s.labels.len(), s.links.len());
                    ExitCode::SUCCESS
                }
                Err(e) => config_error(format!("{}: {e}", file.display())),
            }
        }
        Command::Run {
            scenario,
            seed,
            duration,
            out,
            mut overrides,
            assert,
        } => {
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            if let Some(d) = duration {
                overrides.push(format!("duration={d:?}"));
            }
            let outcome = match harness::run_scenario(&scenario, &overrides) {
                Ok(o) => o,
                Err(e @ HarnessError::UnknownScenario { .. }) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(CONFIG_ERROR);
                }
                Err(e) => return config_error(e),
            };
            let mut text = outcome.report_text();
            if let Some(c) = &outcome.wall_check {
                text += &format!("  [{}] {}: {}\n", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            // a closed pipe (e.g. `| head`) is not an error
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            eprintln!("{} events in {:.2} s", outcome.events, outcome.wall.as_secs_f64());
            if let Some(dir) = out {
                if let Err(e) = outcome.write(&dir) {
                    return config_error(e);
                }
            }
            if assert && !outcome.passed() {
                return ExitCode::from(ASSERTION_FAILED);
            }
            ExitCode::SUCCESS
        }
    }
}
