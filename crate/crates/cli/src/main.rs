mod args;
mod commands;

use std::fmt;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use commands::{BenchArgs, Finish};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

/// Bad flag combinations or values clap cannot check on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn run(cli: Cli) -> Result<Finish> {
    let settings = cli.shared.resolve()?;
    if let Some(n) = settings.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let s = &settings;
    match &cli.command {
        Command::Count { corpus, out } => commands::count(corpus, out.as_ref(), s),
        Command::Constraints { corpus, lm, out } => commands::constraints(corpus, lm.as_ref(), out.as_ref(), s),
        Command::Adapt {
            lm,
            in_corpus,
            constraints,
            history_from,
            out,
        } => commands::adapt(lm, in_corpus, constraints.as_ref(), *history_from, out.as_ref(), s),
        Command::FirstPassAdapt {
            lm,
            reference,
            in_corpus,
            history_from,
            out,
        } => commands::first_pass_adapt(lm, reference, in_corpus, *history_from, out.as_ref(), s),
        Command::Interpolate { lm, other, weight, out } => commands::interpolate(lm, other, *weight, out.as_ref()),
        Command::Ppl { lm, corpus } => commands::ppl(lm, corpus, s),
        Command::Validate { lm } => commands::validate(lm),
        Command::Bench {
            sizes,
            ks,
            repeats,
            vocab_size,
            ops,
            out,
        } => commands::bench(
            BenchArgs {
                sizes,
                ks,
                repeats: *repeats,
                vocab_size: *vocab_size,
                ops: *ops,
                out: out.as_ref(),
            },
            s,
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap exits with status 2 on its own parse errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(Finish::Done) => ExitCode::SUCCESS,
        Ok(Finish::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}
