use std::path::PathBuf;
use std::process::ExitCode;

use blowup_cli::{build_config, run, EXIT_INVALID};
use clap::Parser;

/// Finite-time blowup experiments for U_t = ΔU + α|∇U|² + e^U.
#[derive(Parser, Debug)]
#[command(name = "blowup", version)]
struct Args {
    /// Config file: `key = value` lines or one JSON object.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Only log errors.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.quiet { "error" } else { "info" };
    env_logger::Builder::new().parse_filters(level).target(env_logger::Target::Stderr).init();

    let text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                log::error!("cannot read {}: {e}", path.display());
                return ExitCode::from(EXIT_INVALID as u8);
            }
        },
        None => String::new(),
    };
    let mut cfg = match build_config(&text, &args.set) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    ExitCode::from(run(&cfg) as u8)
}
