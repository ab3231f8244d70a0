use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rodeo_cli::config::output_dir_hint;
use rodeo_cli::run::{schema_failure, EXIT_ERROR};
use rodeo_cli::{parse_config_with, policy_from_env, run, Overrides};

/// Rate-operator quantum jump simulator.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured mode (exact, jump, nmqj, witness, compare).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        mode: args.mode,
        seed: args.seed,
        threads: args.threads,
        out_dir: args.out,
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.config.display());
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    let dir = output_dir_hint(&text, &overrides);
    let parsed = policy_from_env()
        .map_err(|e| vec![e])
        .and_then(|policy| parse_config_with(&text, &overrides).map(|cfg| (cfg, policy)));
    let outcome = match parsed {
        Ok((cfg, policy)) => run(&cfg, &policy),
        Err(errors) => {
            for e in &errors {
                eprintln!("schema error: {e}");
            }
            schema_failure(&dir, &errors)
        }
    };
    let summary = &outcome.summary;
    if let Some(msg) = summary
        .get("error")
        .and_then(|e| e.get("message"))
        .and_then(|m| m.as_str())
    {
        if outcome.exit_code != 2 {
            eprintln!("{msg}");
        }
    }
    if let Some(pass) = summary.get("pass").and_then(|p| p.as_bool()) {
        println!(
            "comparison thresholds: {}",
            if pass { "pass" } else { "FAIL" }
        );
    }
    println!("exit code {}", outcome.exit_code);
    ExitCode::from(outcome.exit_code as u8)
}
