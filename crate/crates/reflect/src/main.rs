use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reflect::harness::{
    emit_reference_figures, execute_config, validate_config, ConfigFile,
};

#[derive(Parser)]
#[command(name = "reflect", version, about = "Reflected-diffusion experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every run in a config and write CSV/JSON artifacts.
    Run {
        config: PathBuf,
        /// Worker threads for path ensembles.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Replace every run's master seed.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Output directory (default: results/<config stem>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without simulating.
    Validate { config: PathBuf },
    /// Rebuild plot-ready CSVs from a results directory.
    Figures { results_dir: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            workers,
            seed_override,
            out,
        } => {
            let mut cfg = ConfigFile::from_path(&config)?;
            if let Some(seed) = seed_override {
                cfg.override_seed(seed);
            }
            let out_dir = out.unwrap_or_else(|| {
                let stem = config
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "run".into());
                PathBuf::from("results").join(stem)
            });
            let summary = execute_config(&cfg, workers.max(1), &out_dir)?;
            for run in &summary.runs {
                let status = if run.n_failed == 0 { "pass" } else { "FAIL" };
                println!(
                    "{}: {} ({}/{} checks)",
                    run.run_id,
                    status,
                    run.n_checks - run.n_failed,
                    run.n_checks
                );
                for f in &run.failed_checks {
                    println!("  failed: {f}");
                }
            }
            println!("artifacts: {}", out_dir.display());
            Ok(summary.all_pass)
        }
        Command::Validate { config } => {
            let cfg = ConfigFile::from_path(&config)?;
            for line in validate_config(&cfg)? {
                println!("{line}");
            }
            println!("config hash: {}", cfg.canonical_hash());
            Ok(true)
        }
        Command::Figures { results_dir } => {
            for name in emit_reference_figures(&results_dir)? {
                println!("wrote {}", results_dir.join(name).display());
            }
            Ok(true)
        }
    }
}
