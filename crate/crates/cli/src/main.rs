use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ppe_cli::runner;
use ppe_cli::{CliError, CliResult, Needs, OutputFormat, Scenario};

#[derive(Parser)]
#[command(name = "ppe", version, about = "Fiber power profile estimation scenarios")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the scenario's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Verb {
    /// Simulate every frame and export tx/rx captures.
    Simulate(Common),
    /// Estimate from tx/rx captures.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1.., requires = "rx")]
        tx: Vec<PathBuf>,
        #[arg(long, num_args = 1.., requires = "tx")]
        rx: Vec<PathBuf>,
        /// Directory written by `simulate`.
        #[arg(long, conflicts_with_all = ["tx", "rx"])]
        captures: Option<PathBuf>,
    },
    /// Loss detection and derivatives of stored profiles.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1.., required = true)]
        profile: Vec<PathBuf>,
    },
    /// Simulate, estimate and analyze in one process.
    Run(Common),
    /// Conditioning sweep.
    Sweep(Common),
}

fn prepare(c: &Common, needs: Needs) -> CliResult<(Scenario, PathBuf)> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let scn = Scenario::load(&c.config, c.seed, needs)?;
    let out = c
        .out
        .clone()
        .or_else(|| scn.config.output_dir.clone())
        .ok_or_else(|| CliError::Config("no --out and no output_dir in the scenario".into()))?;
    Ok((scn, out))
}

fn execute(cli: Cli) -> CliResult<()> {
    let (common, outputs, scn_out) = match &cli.verb {
        Verb::Simulate(c) => {
            let (scn, out) = prepare(c, Needs::Simulate)?;
            (c, runner::simulate(&scn)?, (scn, out))
        }
        Verb::Estimate { common, tx, rx, captures } => {
            let (scn, out) = prepare(common, Needs::Estimate)?;
            let pairs = match captures {
                Some(dir) => runner::pairs_in_dir(dir)?,
                None => {
                    if tx.is_empty() || tx.len() != rx.len() {
                        return Err(CliError::Config(format!(
                            "need matching --tx/--rx lists or --captures (got {} tx, {} rx)",
                            tx.len(),
                            rx.len()
                        )));
                    }
                    tx.iter().cloned().zip(rx.iter().cloned()).collect()
                }
            };
            (common, runner::estimate_files(&scn, &pairs)?.1, (scn, out))
        }
        Verb::Analyze { common, profile } => {
            let (scn, out) = prepare(common, Needs::Analyze)?;
            (common, runner::analyze(&scn, profile)?.1, (scn, out))
        }
        Verb::Run(c) => {
            let (scn, out) = prepare(c, Needs::Run)?;
            (c, runner::run(&scn)?.1, (scn, out))
        }
        Verb::Sweep(c) => {
            let (scn, out) = prepare(c, Needs::Sweep)?;
            (c, runner::sweep(&scn)?.1, (scn, out))
        }
    };
    let (scn, out) = scn_out;
    let written = outputs.write(&out, common.format, &scn.stamp)?;
    eprintln!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
