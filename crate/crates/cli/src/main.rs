use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod report;
mod run;
mod synth;

/// Online cross-domain stream classifier.
#[derive(Debug, Parser)]
#[command(name = "acdc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the prequential protocol over a source and a target stream.
    Run(run::RunArgs),
    /// Generate a synthetic two-domain benchmark with injected drift.
    Synth(synth::SynthArgs),
    /// Check gradients, gradient reversal and expected-output fidelity.
    Gradcheck(GradcheckArgs),
    /// Aggregate metrics files into mean and std per experiment.
    Report(report::ReportArgs),
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Random network configurations for gradient and reversal checks.
    #[arg(long, default_value_t = 20)]
    configs: u64,
    /// Random networks for the Monte-Carlo comparison.
    #[arg(long, default_value_t = 10)]
    probit_nets: u64,
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<acdc::AcdcError> for Failure {
    fn from(e: acdc::AcdcError) -> Self {
        match e {
            acdc::AcdcError::Config(_) => Failure::Usage(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

fn gradcheck(args: &GradcheckArgs) -> Result<(), Failure> {
    let outcomes = acdc::verify::full_suite(args.configs, args.probit_nets, args.draws)?;
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    for c in &outcomes {
        println!("{c}");
    }
    println!("{} checks, {failed} failed", outcomes.len());
    if failed > 0 {
        return Err(Failure::Verification(format!("{failed} checks failed")));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => run::cmd_run(args),
        Command::Synth(args) => synth::cmd_synth(args),
        Command::Gradcheck(args) => gradcheck(&args),
        Command::Report(args) => report::cmd_report(args),
    }
}

pub fn ensure_dir(dir: &PathBuf) -> anyhow::Result<()> {
    use anyhow::Context;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) | Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Verification(m) => eprintln!("verification failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
