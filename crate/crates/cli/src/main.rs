mod args;
mod commands;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use graphkd::error::{Error, Result};

fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Preprocess {
            dataset,
            structure,
            output,
        } => commands::preprocess(g, dataset, structure, output.as_deref()),
        Command::TrainTeacher(a) => commands::train_teacher_cmd(g, a),
        Command::Distill(a) => commands::distill(g, a),
        Command::Evaluate { run } => commands::evaluate_cmd(g, run),
        Command::Ablate(a) => commands::ablate(g, a),
        Command::Grid {
            student,
            lambdas,
            mus,
            etas,
        } => commands::grid(g, student, lambdas.as_deref(), mus.as_deref(), etas.as_deref()),
        Command::DynamicBench(a) => commands::dynamic_bench(g, a),
        Command::Report { inputs, output } => commands::report(inputs, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::MissingArtifact(_) => ExitCode::from(3),
                _ => ExitCode::from(1),
            }
        }
    }
}
