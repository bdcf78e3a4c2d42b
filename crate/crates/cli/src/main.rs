use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cp_regular::experiment::{run_scenario, Overrides, ScenarioConfig};

/// Contact process on random regular graphs: scenario runner.
#[derive(Parser)]
#[command(name = "cp-regular", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (overrides the config).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a config file without running it.
    Validate { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(2)
    })?;
    ScenarioConfig::parse(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(e.exit_code() as u8)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("ok: {} ({} keys)", cfg.scenario, cfg.echo.len());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run {
            config,
            seed,
            threads,
            out,
        } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Err(e) = cfg.apply(&Overrides {
                seed,
                threads,
                out_dir: out,
            }) {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
            match run_scenario(&cfg) {
                Ok(report) => {
                    for w in &report.manifest.warnings {
                        eprintln!("warning: {w}");
                    }
                    println!(
                        "{}: {} files in {} ({:.2}s, hash {})",
                        report.manifest.scenario,
                        report.manifest.files.len(),
                        report.out_dir.display(),
                        report.manifest.wall_time_secs,
                        &report.manifest.content_hash[..12]
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
