use std::process::ExitCode;

use clap::Parser;
use cmms_cli::selftest::run_selftest;
use cmms_cli::{execute, parse_config, write_outputs, Cli, CliError, Command, Mode};

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CMMS_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| CliError::Config(format!("CMMS_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let (mode, args) = match cli.command {
        Command::Selftest { seed } => {
            let results = run_selftest(seed);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            return if failed == 0 {
                Ok(())
            } else {
                Err(CliError::Selftest(format!("{failed} check(s) failed")))
            };
        }
        Command::Uda(a) => (Mode::Uda, a),
        Command::SdaHomo(a) => (Mode::SdaHomo, a),
        Command::SdaHetero(a) => (Mode::SdaHetero, a),
        Command::Ablate(a) => (Mode::Ablate, a),
    };
    let config = parse_config(mode, &args)?;
    let outcome = execute(&config)?;
    write_outputs(&config, &outcome)?;
    if outcome.summary.is_empty() {
        println!(
            "{} predictions written to {} (no target labels, no accuracy report)",
            outcome.predictions.len(),
            config.out.join("predictions.csv").display()
        );
    } else {
        print!("{}", outcome.summary);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
