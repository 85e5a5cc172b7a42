//! Command-line front end: `run`, `validate` and `list-scenarios`.
//!
//! Failures print one JSON object on stderr and exit with 2 (configuration),
//! 3 (physics validation) or 4 (runtime).

pub mod config;
pub mod output;
pub mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::ScenarioConfig;
pub use output::OutputDir;
pub use run::{execute, RunReport, RunSummary};

use crate::error::Error;
use crate::scenarios::SCENARIOS;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PHYSICS: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "wbohm", version, about = "Bohmian and W-Bohmian trajectory simulations with spin")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write artifacts here instead of the configured directory.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Replace the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a configuration and write its artifacts.
    Run { config: PathBuf },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
    /// List the available scenarios.
    ListScenarios,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Schema { .. } | Error::Config(_) | Error::Shape(_) => EXIT_CONFIG,
        Error::Geometry(_)
        | Error::Validation(_)
        | Error::DegenerateDensity
        | Error::EnvironmentNode { .. }
        | Error::SpinMismatch { .. }
        | Error::ToySize { .. } => EXIT_PHYSICS,
        Error::Io(_) | Error::Numerical(_) => EXIT_RUNTIME,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Schema { .. } => "schema",
        Error::Config(_) | Error::Shape(_) => "config",
        Error::Geometry(_) => "geometry",
        Error::Validation(_) | Error::DegenerateDensity | Error::EnvironmentNode { .. } => "validation",
        Error::SpinMismatch { .. } | Error::ToySize { .. } => "validation",
        Error::Io(_) => "io",
        Error::Numerical(_) => "numerical",
    }
}

/// The machine-readable record printed on stderr for a failure.
pub fn error_record(e: &Error, code: i32) -> serde_json::Value {
    let mut record = serde_json::json!({
        "error": kind(e),
        "message": e.to_string(),
        "exit_code": code,
    });
    if let Error::Schema { field, .. } = e {
        record["field"] = field.clone().into();
    }
    record
}

fn fail(e: &Error, code: i32) -> i32 {
    eprintln!("{}", error_record(e, code));
    code
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(&Error::Config("--threads must be at least 1".into()), EXIT_CONFIG);
        }
        // A pool built earlier in this process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::ListScenarios => {
            for (name, description) in SCENARIOS {
                println!("{name:<22}{description}");
            }
            EXIT_OK
        }
        Command::Validate { config } => validate_command(&cli, config),
        Command::Run { config } => run_command(&cli, config),
    }
}

fn load(cli: &Cli, path: &Path) -> Result<(ScenarioConfig, Vec<u8>), (Error, i32)> {
    let (mut config, raw) = ScenarioConfig::load(path).map_err(|e| {
        let code = if matches!(e, Error::Io(_)) { EXIT_CONFIG } else { exit_code(&e) };
        (e, code)
    })?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        config.output.directory = dir.clone();
    }
    Ok((config, raw))
}

fn validate_command(cli: &Cli, path: &Path) -> i32 {
    let (config, _) = match load(cli, path) {
        Ok(c) => c,
        Err((e, code)) => return fail(&e, code),
    };
    if let Err(e) = config.preflight() {
        return fail(&e, exit_code(&e));
    }
    if !cli.quiet {
        let est = estimate(&config);
        println!("ok");
        println!("scenario       {}", config.scenario);
        println!("grid nodes     {}", est.nodes);
        println!("steps          {}", config.steps());
        println!("ensemble       {}", config.ensemble_size());
        println!("memory (est.)  {:.1} MiB", est.memory_bytes / (1024.0 * 1024.0));
        println!("time (est.)    {:.0} s on one core", est.seconds);
    }
    EXIT_OK
}

fn run_command(cli: &Cli, path: &Path) -> i32 {
    let (config, raw) = match load(cli, path) {
        Ok(c) => c,
        Err((e, code)) => return fail(&e, code),
    };
    let mut out = match OutputDir::create(&config.output.directory) {
        Ok(o) => o,
        Err(e) => return fail(&e, EXIT_RUNTIME),
    };
    match execute(&config, &raw, &mut out) {
        Ok(report) => {
            if !cli.quiet {
                print_report(&report, out.root());
            }
            match &report.failure {
                Some(e) => fail(e, exit_code(e)),
                None => EXIT_OK,
            }
        }
        Err(e) => fail(&e, exit_code(&e)),
    }
}

fn print_report(report: &RunReport, root: &Path) {
    let s = &report.summary;
    println!("scenario {} (config sha256 {})", s.scenario, &s.config_sha256[..16]);
    for (name, m) in &s.metrics {
        if let toml::Value::Array(_) = m.value {
            continue;
        }
        println!("  {name:<34}{}", m.value);
    }
    for w in &s.warnings {
        println!("  warning: {w}");
    }
    println!("wrote {} files to {}", s.files.len().max(1), root.display());
}

pub struct Estimate {
    pub nodes: usize,
    pub memory_bytes: f64,
    pub seconds: f64,
}

/// Order-of-magnitude cost of a run from its sizes alone.
pub fn estimate(config: &ScenarioConfig) -> Estimate {
    let nodes: usize = config.grid.axes.iter().map(|a| a.points).product();
    let dims = config.grid.axes.len() as f64;
    let planes = (config.spin_dim() * config.components()) as f64;
    let field = nodes as f64 * planes * 16.0;
    let snapshots = (config.steps() / config.time.snapshot_stride + 2) as f64;
    let n = config.ensemble_size() as f64;
    let mut memory = field * (4.0 + 2.0 * dims) + n * snapshots * dims * 8.0;
    let log = (nodes as f64).log2().max(1.0);
    // Two transforms per plane per step, plus the gradient snapshot.
    let per_step = nodes as f64 * planes * log * (2.0 + 2.0 * dims) * 2.5e-9 + n * 4.0 * 2f64.powf(dims) * planes * 2e-8;
    let mut seconds = per_step * config.steps() as f64;
    if config.output.density_snapshots {
        memory += snapshots * nodes as f64 * 8.0;
    }
    if config.scenario == "epr" {
        // A conditional density matrix per run and snapshot.
        let line = config.grid.axes[0].points as f64;
        seconds += n * snapshots * line * 4.0 * 40e-9;
    }
    Estimate {
        nodes,
        memory_bytes: memory,
        seconds,
    }
}
