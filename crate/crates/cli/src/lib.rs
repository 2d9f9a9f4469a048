//! Command-line front end: experiment configs, run harnesses, checkpoints
//! and report artifacts.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! abort (including a failed gradient check), 5 I/O error.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod harness;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::harness::Context;

pub use checkpoint::{load_checkpoint, serialize_checkpoint, Checkpoint};

#[derive(Debug, Parser)]
#[command(name = "hmnn", version, about = "Sequential variational filtering of neural network weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train static MNIST classifiers, one per DropConnect rate.
    TrainStatic(CommonArgs),
    /// Filter an evolving-label classification stream.
    TrainEvolving(CommonArgs),
    /// Filter a frame series with sliding windows.
    TrainSeries(CommonArgs),
    /// Score a checkpoint (given with --resume) on the configured data.
    Evaluate(CommonArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(CommonArgs),
    /// Write the configured dataset to the output directory.
    MakeData(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Checkpoint to continue from (or to score, for evaluate).
    #[arg(long)]
    resume: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (&'static str, &CommonArgs) {
        match self {
            Command::TrainStatic(a) => ("train-static", a),
            Command::TrainEvolving(a) => ("train-evolving", a),
            Command::TrainSeries(a) => ("train-series", a),
            Command::Evaluate(a) => ("evaluate", a),
            Command::Gradcheck(a) => ("gradcheck", a),
            Command::MakeData(a) => ("make-data", a),
        }
    }

    fn accepts(&self, experiment: Experiment) -> bool {
        match self {
            Command::TrainStatic(_) => experiment == Experiment::Static,
            Command::TrainEvolving(_) => experiment == Experiment::Evolving,
            Command::TrainSeries(_) => experiment == Experiment::Series,
            Command::Gradcheck(_) => experiment == Experiment::Gradcheck,
            Command::Evaluate(_) => experiment != Experiment::Gradcheck,
            Command::MakeData(_) => true,
        }
    }
}

fn build_context(cmd: &Command) -> CliResult<Context> {
    let (name, args) = cmd.parts();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if !cmd.accepts(cfg.experiment) {
        return Err(CliError::Config(format!(
            "{name} cannot run a {} experiment",
            cfg.experiment.name()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let output = args
        .output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.experiment.name()));
    cfg.output_dir = Some(output.clone());
    Ok(Context {
        command: name,
        cfg,
        output,
        resume: args.resume.clone(),
    })
}

fn dispatch(cmd: &Command, ctx: &Context) -> CliResult<String> {
    use harness::{evolving, gradcheck, make_data, series, static_mnist};
    match cmd {
        Command::TrainStatic(_) => static_mnist::run(ctx),
        Command::TrainEvolving(_) => evolving::run(ctx),
        Command::TrainSeries(_) => series::run(ctx),
        Command::Gradcheck(_) => gradcheck::run(ctx),
        Command::MakeData(_) => make_data::run(ctx),
        Command::Evaluate(_) => match ctx.cfg.experiment {
            Experiment::Static => static_mnist::evaluate(ctx),
            Experiment::Evolving => evolving::evaluate(ctx),
            Experiment::Series => series::evaluate(ctx),
            Experiment::Gradcheck => unreachable!("rejected in build_context"),
        },
    }
}

fn fail(err: &CliError, output: Option<&std::path::Path>) -> i32 {
    eprintln!("{}", err.to_json());
    if let Some(dir) = output {
        report::write_error(dir, err);
    }
    err.exit_code()
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr as JSON and, when the
/// output directory is known, written to `error.json`.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => return fail(&CliError::Config(e.to_string().trim_end().to_string()), None),
    };
    let ctx = match build_context(&cli.command) {
        Ok(ctx) => ctx,
        Err(e) => return fail(&e, cli.command.parts().1.output.as_deref()),
    };
    match dispatch(&cli.command, &ctx) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => fail(&e, Some(&ctx.output)),
    }
}
