//! Drives a configuration file through the same path as `wbohm run`.
//!
//! `cargo run --release --example run_config -- configs/free_gaussian.toml`

use wbohm::cli::config::ScenarioConfig;
use wbohm::cli::output::OutputDir;
use wbohm::cli::run::execute;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/free_gaussian.toml".into());
    let (config, raw) = ScenarioConfig::load(path.as_ref())?;
    let out = tempfile::tempdir()?;
    let mut dir = OutputDir::create(out.path())?;
    let report = execute(&config, &raw, &mut dir)?;
    for (name, metric) in &report.summary.metrics {
        println!("{name:<32} {}", metric.value);
    }
    if let Some(e) = report.failure {
        println!("physics check failed: {e}");
    }
    Ok(())
}
