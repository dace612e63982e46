use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fcvi::harness::{self, build_report, load_experiment, output_dir, run_experiment, Summary};
use fcvi::FcviError;

#[derive(Debug, Parser)]
#[command(name = "fcvi", version, about = "Run and summarize constrained VI experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (horizon, seed) cell of a config on one thread.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's "out" field.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cells of a config in parallel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "FCVI_WORKERS")]
        workers: Option<usize>,
    },
    /// Tabulate one or more summary.json files.
    Report {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run(config: &Path, out: Option<&Path>, workers: usize) -> fcvi::Result<()> {
    let exp = load_experiment(config)?;
    let dir = output_dir(&exp, out)?;
    let summary = run_experiment(&exp, &dir, workers)?;
    let failed = summary.failed_cells();
    eprintln!(
        "{}: {} cells, {} failed, outputs in {}",
        config.display(),
        summary.cells.len(),
        failed,
        dir.display()
    );
    for cell in summary.cells.iter().filter(|c| !c.ok()) {
        eprintln!(
            "  T={} seed={}: {}",
            cell.horizon,
            cell.seed,
            cell.error.as_deref().unwrap_or("")
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> fcvi::Result<()> {
    match cli.command {
        Command::Solve { config, out } => run(&config, out.as_deref(), 1),
        Command::Sweep { config, out, workers } => {
            run(&config, out.as_deref(), workers.unwrap_or_else(default_workers))
        }
        Command::Report { summaries, csv } => {
            let loaded = summaries.iter().map(Summary::load).collect::<fcvi::Result<Vec<_>>>()?;
            let report = build_report(&loaded)?;
            print!("{}", report.to_text());
            if let Some(path) = csv {
                harness::write_atomic(&path, report.to_csv().as_bytes())?;
            }
            Ok(())
        }
        Command::Validate { config } => {
            let exp = load_experiment(&config)?;
            println!(
                "ok: {} on {} ({} horizons x {} seeds)",
                exp.config.method.as_str(),
                exp.instance.label(),
                exp.config.horizons.len(),
                exp.config.seeds.len()
            );
            Ok(())
        }
    }
}

fn exit_code(err: &FcviError) -> u8 {
    if err.is_config() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
