use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use randalign_cli::experiment::run_matrix;
use randalign_cli::gen::gen_sbm;
use randalign_cli::plot::{emit_plot, PlotKind};
use randalign_cli::verify::verify_fixtures;
use randalign_cli::CliResult;

#[derive(Parser)]
#[command(name = "randalign", version, about = "RandAlign depth-sweep experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (depth, randalign, scaling, seed) run of a config and
    /// write runs.csv, epochs.csv, smoothness.csv and summary.csv.
    Run {
        config: PathBuf,
        /// Write tables here instead of the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fixture checks; exit 1 if any fails.
    Verify,
    /// Render an SVG chart from a run table.
    Plot {
        csv: PathBuf,
        svg: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
    },
    /// Write the config's dataset as edge-list, label and feature files.
    GenSbm {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config, out } => {
            let output = run_matrix(&config, out.as_deref())?;
            let diverged = output.diverged();
            println!("{} runs complete", output.records.len());
            if diverged > 0 {
                eprintln!("warning: {diverged} run(s) diverged");
            }
        }
        Command::Verify => {
            verify_fixtures(&mut std::io::stdout())?;
            println!("all checks passed");
        }
        Command::Plot { csv, svg, kind } => emit_plot(&csv, &svg, kind)?,
        Command::GenSbm { config, out } => {
            let written = gen_sbm(&config, out.as_deref())?;
            println!("wrote {} files", written.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
