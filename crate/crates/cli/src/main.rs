//! The `congest` binary: a thin dispatcher over the command modules.
//!
//! Exit codes: 0 on success, 1 for validation errors (including unknown
//! flags), 2 for runtime failures.

use clap::Parser;
use congest_cli::commands::{
    convert, cpm_solve, evaluate, plot_data, simulate, train_student, train_teacher,
};
use congest_cli::CliResult;

#[derive(Parser, Debug)]
#[command(
    name = "congest",
    version,
    about = "Congestion-aware multi-agent trajectory prediction pipeline",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Generate a scripted scenario dataset with collision labels.
    Simulate(simulate::Args),
    /// Train the congestion teacher (graph autoencoder + mixture).
    TrainTeacher(train_teacher::Args),
    /// Train the trajectory student, optionally against a teacher.
    TrainStudent(train_student::Args),
    /// Score a student checkpoint against the constant-velocity baseline.
    Evaluate(evaluate::Args),
    /// Minimize the mixture-matching bound between two mixture files.
    CpmSolve(cpm_solve::Args),
    /// Emit plot-ready CSV series from run artifacts.
    PlotData(plot_data::Args),
    /// Ingest raw trajectory CSV into the scene JSONL format.
    Convert(convert::Args),
}

fn dispatch(command: &Command) -> CliResult<()> {
    match command {
        Command::Simulate(args) => simulate::run(args),
        Command::TrainTeacher(args) => train_teacher::run(args),
        Command::TrainStudent(args) => train_student::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::CpmSolve(args) => cpm_solve::run(args),
        Command::PlotData(args) => plot_data::run(args),
        Command::Convert(args) => convert::run(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests print to stdout and succeed; real
            // parse errors show usage and count as validation failures.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(failure) = dispatch(&cli.command) {
        eprintln!("error: {failure}");
        std::process::exit(failure.exit_code());
    }
}
