use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cuemwf::config::RunConfig;
use cuemwf::output;
use cuemwf::pipeline::{self, Outcome};
use cuemwf::{CliError, Result};

#[derive(Parser)]
#[command(name = "cuemwf", version, about = "Binaural noise reduction with interaural cue preservation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve each configured variant and write reports, tables and audio.
    Process(Common),
    /// Sweep the penalty weight over `run.alphas`.
    Sweep(Common),
    /// Calibrate the penalty weight for a worst-ear SNR loss.
    Calibrate(Common),
    /// Tabulate the analytic and Monte-Carlo phase density.
    PhasePdf(Common),
}

#[derive(Args)]
struct Common {
    /// Config file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `run.out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `run.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<Outcome> {
    let (common, cmd): (&Common, fn(&RunConfig) -> Result<Outcome>) = match &cli.command {
        Command::Process(c) => (c, pipeline::process),
        Command::Sweep(c) => (c, pipeline::sweep),
        Command::Calibrate(c) => (c, pipeline::calibrate),
        Command::PhasePdf(c) => (c, pipeline::phase_pdf_command),
    };
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    let dir = common
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = cmd(&config)?;
    output::write_all(&dir, &outcome.artifacts)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(o) => {
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
            for line in &o.summary {
                println!("{line}");
            }
            if o.solver_failed() {
                eprintln!(
                    "error: solver did not converge on {:.1}% of bins",
                    100.0 * o.worst_unconverged
                );
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
