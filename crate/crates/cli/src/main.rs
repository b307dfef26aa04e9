use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use mobsense_cli::{cmd_coverage, cmd_run, cmd_validate, exit_code, parse_duration, RunOptions};

#[derive(Parser)]
#[command(name = "mobsense", version, about = "Run and evaluate mobile-sensing study protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a protocol file against the registered sampling packages.
    Validate { protocol: PathBuf },
    /// Execute a study and write sink output and reports.
    Run {
        protocol: PathBuf,
        /// Run length such as 24h, 90m or 30s.
        #[arg(long, value_parser = parse_duration)]
        duration: i64,
        /// Use a virtual clock (no sleeping). Pass `--virtual-time false` for wall-clock time.
        #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true",
              action = clap::ArgAction::Set)]
        virtual_time: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV with header `t_ms,level`; times are offsets from run start.
        #[arg(long)]
        battery_profile: Option<PathBuf>,
        /// CSV with header `t_ms,lat,lon`; times are offsets from run start.
        #[arg(long)]
        location_script: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute per-hour coverage from a run directory's sink files.
    Coverage {
        run_dir: PathBuf,
        protocol: PathBuf,
        /// Also write the CSV to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn report(err: anyhow::Error) -> ExitCode {
    eprintln!("error: {err:#}");
    ExitCode::from(exit_code(&err) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Validate { protocol } => ExitCode::from(cmd_validate(&protocol, &mut stdout) as u8),
        Command::Run {
            protocol,
            duration,
            virtual_time,
            seed,
            battery_profile,
            location_script,
            out,
        } => {
            let interrupt = Arc::new(AtomicBool::new(false));
            let flag = interrupt.clone();
            if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)) {
                eprintln!("warning: interrupt handler not installed: {e}");
            }
            let opts = RunOptions {
                protocol,
                duration_ms: duration,
                virtual_time,
                seed,
                battery_profile,
                location_script,
                out,
            };
            match cmd_run(&opts, &interrupt, &mut stdout) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => report(e),
            }
        }
        Command::Coverage { run_dir, protocol, output } => {
            let mut csv = Vec::new();
            let result = cmd_coverage(&run_dir, &protocol, &mut csv).and_then(|_| {
                if let Some(path) = &output {
                    std::fs::write(path, &csv)?;
                }
                stdout.write_all(&csv)?;
                Ok(())
            });
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => report(e),
            }
        }
    }
}
