//! `pilotwave run <scenario> --config <file> --out <dir> [--seed N] [--trajectories K]`
//! `pilotwave verify <dir>`
//!
//! Exit codes: 0 all checks passed, 1 a check failed (or the run itself
//! failed), 2 configuration or summary error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use pilotwave_core::scenarios::{
    parse_config_for, run_scenario, verify_outputs, write_outputs, ConfigError, OutputError, ScenarioConfig,
    ScenarioError, ScenarioKind,
};

#[derive(Parser)]
#[command(name = "pilotwave", version, about = "Pilot-wave trajectory scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectories, densities and a summary.
    Run {
        /// double_slit | spin_measurement | momentum_measurement
        scenario: String,
        /// key=value config file; defaults are used when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Re-check the pass/fail flags recorded in <dir>/summary.json.
    Verify { dir: PathBuf },
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            config,
            out,
            seed,
            trajectories,
        } => run(&scenario, config, out, seed, trajectories),
        Command::Verify { dir } => verify(dir),
    }
}

fn load_config(
    scenario: &str,
    path: Option<PathBuf>,
    seed: Option<u64>,
    trajectories: Option<usize>,
) -> Result<ScenarioConfig, String> {
    let kind: ScenarioKind = scenario.parse().map_err(|e: ConfigError| e.to_string())?;
    let text = match &path {
        Some(p) => fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut cfg = parse_config_for(&text, Some(kind)).map_err(|e| match &path {
        Some(p) => format!("{}: {e}", p.display()),
        None => e.to_string(),
    })?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(k) = trajectories {
        cfg.trajectories = k;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(
    scenario: &str,
    config: Option<PathBuf>,
    out: PathBuf,
    seed: Option<u64>,
    trajectories: Option<usize>,
) -> ExitCode {
    let cfg = match load_config(scenario, config, seed, trajectories) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let start = Instant::now();
    let result = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(ScenarioError::Config(e)) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(EXIT_FAILED);
        }
    };
    if let Err(e) = write_outputs(&result, &out) {
        eprintln!("write failed: {e}");
        return ExitCode::from(EXIT_FAILED);
    }
    println!(
        "{} seed={} trajectories={} ({:.1?})",
        cfg.scenario,
        cfg.seed,
        cfg.trajectories,
        start.elapsed()
    );
    for (name, value) in &result.metrics {
        println!("  {name:<24} {value:.6e}");
    }
    for (name, ok) in &result.checks {
        println!("  [{}] {name}", if *ok { "pass" } else { "FAIL" });
    }
    if result.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn verify(dir: PathBuf) -> ExitCode {
    match verify_outputs(&dir) {
        Ok(v) if v.passed() => {
            println!("{}: all checks passed", dir.display());
            ExitCode::SUCCESS
        }
        Ok(v) => {
            for name in &v.failed {
                println!("FAIL {name}");
            }
            if v.inconsistent {
                println!("FAIL summary `passed` flag disagrees with its checks");
            }
            ExitCode::from(EXIT_FAILED)
        }
        Err(e @ (OutputError::Json { .. } | OutputError::Schema { .. } | OutputError::Io { .. })) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
