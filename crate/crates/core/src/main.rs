use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use oslab::cli::{run, Command, Overrides};

/// Operator-calculus experiments on finite symmetric matrices.
#[derive(Parser)]
#[command(name = "oslab", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the config's `output`, then oslab-out/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "OSLAB_JOBS")]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        jobs: args.jobs,
    };
    ExitCode::from(run(args.command, &args.config, &overrides) as u8)
}
