//! Configuration-driven experiment runner: reads a JSON config, writes one
//! CSV per curve and a `manifest.json`.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

pub use config::ExperimentConfig;
pub use experiments::Report;

/// Env var with the worker thread count.
pub const THREADS_ENV: &str = "GABORMC_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

#[derive(Debug)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub violations: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self, verify: bool) -> i32 {
        if verify && !self.violations.is_empty() { EXIT_VIOLATION } else { EXIT_OK }
    }
}

/// Loads `config` with `overrides`, runs it and writes the artifacts.
/// `out` takes precedence over the config's `output_dir`, which defaults to `out`.
pub fn run(config: &Path, overrides: &[String], out: Option<&Path>) -> Result<Outcome> {
    let (cfg, echo) = ExperimentConfig::load(config, overrides)?;
    let out_dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let report = experiments::run(&cfg)?;
    let mut files = output::write_tables(&out_dir, &report.tables)?;
    let manifest = output::Manifest {
        schema_version: config::SCHEMA_VERSION,
        build_id: output::BUILD_ID,
        experiment: serde_json::to_value(cfg.experiment)?.as_str().unwrap_or_default().to_owned(),
        seed: cfg.seed,
        config: &echo,
        files: report.tables.iter().map(|t| t.file_name()).collect(),
        violations: &report.violations,
        created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    files.push(output::write_manifest(&out_dir, &manifest)?);
    Ok(Outcome { out_dir, files, violations: report.violations })
}

/// Sizes the global rayon pool from [`THREADS_ENV`] if it is set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
