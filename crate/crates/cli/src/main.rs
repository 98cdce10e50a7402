mod args;
mod commands;
mod config;
mod failure;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use config::RunConfig;
use failure::Failure;

fn run(cli: Cli) -> Result<serde_json::Value, Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    } else {
        let seed = cfg.seed;
        cfg.set_seed(seed);
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(Failure::Param("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Compute(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Compress(a) => commands::compress_cmd(&mut cfg, a),
        Command::Reestimate(a) => commands::reestimate_cmd(&mut cfg, a),
        Command::Reconstruct(a) => commands::reconstruct_cmd(a),
        Command::Slice(a) => commands::slice_cmd(a),
        Command::Diagnostics(a) => commands::diagnostics_cmd(&mut cfg, a),
        Command::Synth(a) => commands::synth_cmd(&mut cfg, a),
        Command::Info(a) => commands::info_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            println!("{}", serde_json::json!({ "error": f.to_string(), "exit_code": f.code() }));
            ExitCode::from(f.code() as u8)
        }
    }
}
