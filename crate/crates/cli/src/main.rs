use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use relcomp::experiments::{self, ExperimentTag};

#[derive(Parser, Debug)]
#[command(name = "relcomp", version, about = "Run a seeded relational-composition experiment")]
struct Cli {
    /// Experiment to run; must match the config's `experiment` field.
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Gen,
    Bind,
    Learn,
    Echo,
    Steer,
    Bench,
    Probe,
    Diffs,
}

impl From<Command> for ExperimentTag {
    fn from(c: Command) -> Self {
        match c {
            Command::Gen => ExperimentTag::Gen,
            Command::Bind => ExperimentTag::Bind,
            Command::Learn => ExperimentTag::Learn,
            Command::Echo => ExperimentTag::Echo,
            Command::Steer => ExperimentTag::Steer,
            Command::Bench => ExperimentTag::Bench,
            Command::Probe => ExperimentTag::Probe,
            Command::Diffs => ExperimentTag::Diffs,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { experiments::EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let mut cfg = match experiments::load_config(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(experiments::exit_code(&e) as u8);
        }
    };
    let wanted = ExperimentTag::from(cli.command);
    if cfg.tag() != wanted {
        eprintln!(
            "error: {}: config is for experiment `{}`, not `{wanted}`",
            cli.config.display(),
            cfg.tag()
        );
        return ExitCode::from(experiments::EXIT_CONFIG as u8);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(experiments::EXIT_CONFIG as u8);
    }
    match experiments::run_with_threads(&cfg, cli.threads) {
        Ok(summary) => {
            println!("wrote {}", summary.out.display());
            for (key, value) in &summary.manifest.headline {
                println!("  {key} = {value}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {wanted} failed: {e}");
            ExitCode::from(experiments::exit_code(&e) as u8)
        }
    }
}
