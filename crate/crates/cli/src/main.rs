mod args;
mod commands;
mod record;

use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::Parser;
use dcsft_core::dataset::file_digest;

use args::{Cli, Command};
use record::{Outcome, RunRecord};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let started = SystemTime::now();
    let clock = Instant::now();
    let seed = cli.seed.unwrap_or(0);
    let mut outcome = Outcome::default();
    let (name, config, result) = match &cli.command {
        Command::Sample(a) => ("sample", serde_json::to_value(a), commands::sample(a, seed, &mut outcome)),
        Command::Curate(a) => ("curate", serde_json::to_value(a), commands::curate(a, seed, &mut outcome)),
        Command::Stats(a) => ("stats", serde_json::to_value(a), commands::stats(a, &mut outcome)),
        Command::Advantage(a) => ("advantage", serde_json::to_value(a), commands::advantage(a)),
        Command::Lab(a) => match commands::lab(a, cli.seed, &mut outcome) {
            Ok(cfg) => ("lab", serde_json::to_value(&cfg), Ok(())),
            Err(e) => ("lab", serde_json::to_value(a), Err(e)),
        },
        Command::MockServe(a) => {
            return match commands::mock_serve(a) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            };
        }
    };

    let mut config = config.unwrap_or(serde_json::Value::Null);
    if let serde_json::Value::Object(map) = &mut config {
        map.entry("seed").or_insert(seed.into());
    }
    let mut rec = RunRecord::new(name, config, started, clock.elapsed());
    for path in &outcome.inputs {
        if let Ok(d) = file_digest(path) {
            rec.input_digests.insert(path.display().to_string(), d);
        }
    }
    rec.outputs = outcome.outputs;
    if let Err(e) = &result {
        rec.status = format!("error: {e:#}");
    }
    if let Err(e) = rec.append_to(&cli.run_log) {
        eprintln!("warning: {e:#}");
    }

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
