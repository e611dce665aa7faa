use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use driftline_service::batch::{self, RunConfig};
use driftline_service::server::{self, ServeConfig};
use driftline_service::ServiceError;

#[derive(Parser)]
#[command(name = "driftline", version, about = "Continual learning runs for streaming regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to completion and write the run directory.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Decide every update with the auto policy.
        #[arg(long)]
        auto: bool,
        /// Stop after the checkpoint with this label.
        #[arg(long)]
        until: Option<String>,
    },
    /// Bootstrap from a scenario and serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        scenario: PathBuf,
        /// Leave every update to the operator.
        #[arg(long)]
        manual: bool,
        /// Milliseconds between scripted samples.
        #[arg(long, default_value_t = 100)]
        interval_ms: u64,
        /// Bootstrap only; samples arrive through POST /ingest.
        #[arg(long)]
        hold: bool,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Pack a run directory into a tar archive.
    Export {
        dir: PathBuf,
        #[arg(long)]
        archive: PathBuf,
    },
    /// Replay a run directory or archive and compare the logs.
    Replay {
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Writes to stdout, ignoring a closed pipe.
fn say(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn fail(e: ServiceError) -> ExitCode {
    eprintln!("driftline: {e}");
    match e {
        ServiceError::Unreadable { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            scenario,
            out,
            auto,
            until,
        } => {
            let config = RunConfig {
                scenario,
                out: out.clone(),
                auto,
                until,
            };
            match batch::run(&config) {
                Ok(output) => {
                    say(&output.report.to_text());
                    say(&format!("run written to {}\n", out.display()));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Serve {
            port,
            scenario,
            manual,
            interval_ms,
            hold,
            host,
        } => {
            let mut script = match batch::load_scenario(&scenario) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            script.instance.auto_policy.enabled = !manual;
            let config = ServeConfig {
                script,
                play: !hold,
                interval: Duration::from_millis(interval_ms),
            };
            let runtime = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => return fail(e.into()),
            };
            let addr = SocketAddr::new(host, port);
            eprintln!("driftline: listening on http://{addr}");
            match runtime.block_on(server::serve(config, addr)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Export { dir, archive } => match batch::export(&dir, &archive) {
            Ok(()) => {
                say(&format!("archived {} to {}\n", dir.display(), archive.display()));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Replay { source, out } => match batch::replay_run(&source, &out) {
            Ok(output) => {
                say(&format!("{} log records replayed identically\n", output.records().len()));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
