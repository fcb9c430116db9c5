mod cli;
mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};
use error::CliError;

const THREADS_ENV: &str = "KTL_THREADS";

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match &cli.command {
        Command::BuildGraph(a) => commands::build_graph(a),
        Command::Filter(a) => commands::filter(a),
        Command::Train(a) => commands::train(a),
        Command::Answer(a) => commands::answer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate_cmd(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::MakeFixture(a) => commands::make_fixture(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(last) = e.last_finite_loss() {
                match last {
                    Some(l) => output::kv("last_finite_loss", l),
                    None => output::kv("last_finite_loss", "none"),
                }
            }
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
