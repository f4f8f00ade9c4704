//! `hbl`: run experiments from JSON configs.
//!
//! Exit codes: 0 when every built-in check passes, 1 when a check fails or a
//! run errors, 2 for usage and configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hbl_core::{Manifest, RunConfig, EXPERIMENTS};

#[derive(Debug, Parser)]
#[command(name = "hbl", version, about = "Local-entropy smoothing and half-bridge experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment named in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// List available experiments.
    List {
        #[arg(long)]
        json: bool,
    },
    Smooth(Named),
    PdeCheck(Named),
    Duality(Named),
    Bridge(Named),
    VerifyTheorem(Named),
    Optimize(Named),
}

#[derive(Debug, Args)]
struct Common {
    /// Override `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the manifest as JSON.
    #[arg(long)]
    json: bool,
}

/// Run one experiment, optionally starting from a config file. The
/// subcommand name overrides the config's `experiment` field.
#[derive(Debug, Args)]
struct Named {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Usage(String),
    Run(String),
}

fn load(experiment: Option<&str>, config: Option<&PathBuf>, common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match config {
        Some(p) => RunConfig::from_path(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => RunConfig::for_experiment(experiment.expect("named subcommand")),
    };
    if let Some(name) = experiment {
        cfg.experiment = name.to_string();
    }
    if let Some(seed) = common.seed {
        cfg.mc.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn report(m: &Manifest, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(m).expect("manifest serializes"));
        return;
    }
    println!("{} -> {}", m.config.experiment, m.config.run_dir().display());
    for c in &m.checks {
        println!("  {:<4} {} = {:.6e} (threshold {:.6e})", if c.pass { "ok" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    println!("{}", if m.pass { "PASS" } else { "FAIL" });
}

fn execute(cfg: RunConfig, json: bool) -> Result<bool, Failure> {
    let m = hbl_core::experiment::run(&cfg).map_err(|e| if e.is_config() { Failure::Usage(e.to_string()) } else { Failure::Run(e.to_string()) })?;
    report(&m, json);
    Ok(m.pass)
}

fn list(json: bool) {
    if json {
        let rows: Vec<_> = EXPERIMENTS.iter().map(|(n, d)| serde_json::json!({ "name": n, "description": d })).collect();
        println!("{}", serde_json::Value::Array(rows));
    } else {
        for (n, d) in EXPERIMENTS {
            println!("{n:<16}{d}");
        }
    }
}

/// Size the global pool from `HBL_THREADS`. Results do not depend on it.
fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("HBL_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| Failure::Usage(format!("HBL_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Run(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<bool, Failure> {
    configure_threads()?;
    let (name, named) = match cli.command {
        Command::List { json } => {
            list(json);
            return Ok(true);
        }
        Command::Run { config, common } => return execute(load(None, Some(&config), &common)?, common.json),
        Command::Smooth(n) => ("smooth", n),
        Command::PdeCheck(n) => ("pde-check", n),
        Command::Duality(n) => ("duality", n),
        Command::Bridge(n) => ("bridge", n),
        Command::VerifyTheorem(n) => ("verify-theorem", n),
        Command::Optimize(n) => ("optimize", n),
    };
    execute(load(Some(name), named.config.as_ref(), &named.common)?, named.common.json)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help/--version
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
