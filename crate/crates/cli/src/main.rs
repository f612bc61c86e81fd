use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gabormc_cli::{EXIT_USAGE, THREADS_ENV};

#[derive(Parser)]
#[command(name = "gabormc", version, about = "Multicarrier bound and simulation experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a JSON config.
    #[command(after_help = format!("Worker threads: set {THREADS_ENV}."))]
    Run {
        config: PathBuf,
        /// Override a config entry, e.g. --set params.trials=200
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (overrides output_dir)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 2 if any bound check fails
        #[arg(long)]
        verify: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Err(e) = gabormc_cli::init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_USAGE as u8);
    }
    let Cmd::Run { config, set, out, verify } = cli.cmd;
    match gabormc_cli::run(&config, &set, out.as_deref()) {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            for v in &o.violations {
                eprintln!("violation: {v}");
            }
            ExitCode::from(o.exit_code(verify) as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}
