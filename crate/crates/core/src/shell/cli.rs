use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use super::{execute, Command, Format, RunOptions, Sweep};

/// Solvers and simulators for logically synchronized clock networks.
#[derive(Debug, Parser)]
#[command(name = "logsync", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Restrict series output to one format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Run once per value: `param=start:stop:count`.
    #[arg(long)]
    pub sweep: Option<Sweep>,
}

/// Parses arguments, runs, and returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let opts = RunOptions {
        out: cli.out,
        seed: cli.seed,
        format: cli.format,
        sweep: cli.sweep,
    };
    match execute(cli.command, &cli.scenario, &opts) {
        Ok(files) => {
            for f in files {
                println!("{}", opts.out.join(f).display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
