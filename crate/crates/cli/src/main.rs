//! `layerlens` command-line pipeline: synthesize a corpus, train encoders,
//! evaluate them and analyse their layers.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 I/O error,
//! 3 numerical or training failure.

mod commands;
mod corpus_io;
mod error;
mod manifest;

use clap::{Parser, Subcommand};

use commands::{EvalArgs, LabelsArgs, ProjectArgs, ReplayArgs, SvccaArgs, SynthArgs, TrainArgs};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "layerlens", version, about = "Layer-wise normalization analysis for framewise encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with known tone, final and sex attributes.
    Synth(SynthArgs),
    /// Write central-frame training labels for a corpus.
    Labels(LabelsArgs),
    /// Train an encoder on one or more tasks.
    Train(TrainArgs),
    /// Central-frame accuracy of each head.
    Eval(EvalArgs),
    /// Per-layer SVCCA against attribute labels, with a line chart.
    Svcca(SvccaArgs),
    /// 2-D PCA projection of one layer, with a scatter plot.
    Project(ProjectArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Labels(a) => commands::labels(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Svcca(a) => commands::svcca(&a),
        Command::Project(a) => commands::project(&a),
        Command::Replay(a) => commands::replay(&a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
