use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nonlocal_flow::{exit_code, run_batch, run_file};

#[derive(Parser)]
#[command(name = "nonlocal-flow", version, about = "Run nonlocal p-Laplacian scenarios")]
struct Cli {
    /// Output directory (per scenario for `run`, parent of per-scenario folders for `batch`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file.
    Run { config: PathBuf },
    /// Run every *.json scenario in a directory.
    Batch {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).init();
    let code = match cli.cmd {
        Cmd::Run { config } => {
            let res = run_file(&config, cli.out.as_deref());
            match &res {
                Ok(o) => log::info!("{}: {:?}, artifacts in {}", config.display(), o.status, o.out_dir.display()),
                Err(e) => log::error!("{e:#}"),
            }
            exit_code(&res)
        }
        Cmd::Batch { dir, jobs } => {
            let out = cli.out.unwrap_or_else(|| dir.join("out"));
            match run_batch(&dir, &out, jobs.max(1)) {
                Ok(results) => {
                    for (p, c) in &results {
                        log::info!("{} -> exit {c}", p.display());
                    }
                    let codes = results.iter().map(|r| r.1);
                    if codes.clone().any(|c| c == 1) {
                        1
                    } else {
                        codes.max().unwrap_or(0)
                    }
                }
                Err(e) => {
                    log::error!("{e:#}");
                    1
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
