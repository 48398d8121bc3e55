//! Configuration, caching and experiment driver behind the `bslab` binary.

pub mod cache;
pub mod config;
pub mod experiments;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use bslab_core::spectral::SpectralResult;

use crate::config::ExperimentConfig;
use crate::report::ExperimentReport;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub use_cache: bool,
    pub cache_root: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { use_cache: true, cache_root: cache::default_cache_root() }
    }
}

fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Runs one experiment, serving it from the cache when an identical
/// configuration was run before. Outputs land in the configured directory.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    let start = Instant::now();
    let digest = cache::cache_key(cfg);
    let use_cache = opts.use_cache && cfg.cache;

    if use_cache {
        if let Some(files) = cache::lookup(&opts.cache_root, &digest).context("stage cache lookup")? {
            let text = files
                .iter()
                .find(|(n, _)| n == "report.txt")
                .map(|(_, b)| String::from_utf8_lossy(b).into_owned())
                .unwrap_or_default();
            if let Some(mut report) = ExperimentReport::from_text(&text) {
                report.cache_hit = true;
                report.wall_seconds = start.elapsed().as_secs_f64();
                let outputs: Vec<_> = files.into_iter().filter(|(n, _)| n != "report.txt").collect();
                write_outputs(&cfg.output_dir, &outputs).context("stage output")?;
                fs::write(cfg.output_dir.join("report.txt"), report.to_text()).context("stage output")?;
                return Ok(report);
            }
        }
    }

    let (mut report, mut files) = experiments::execute(cfg, &digest)?;
    report.wall_seconds = start.elapsed().as_secs_f64();
    files.push(("report.txt".into(), report.to_text().into_bytes()));
    write_outputs(&cfg.output_dir, &files).context("stage output")?;
    if use_cache {
        cache::store(&opts.cache_root, &digest, &files).context("stage cache store")?;
    }
    Ok(report)
}

/// Writes a spectrum CSV with its `c_j` column and config digest preamble.
pub fn emit_csv(path: &Path, result: &SpectralResult, theta: Option<f64>, digest: &str) -> Result<()> {
    let mut r = result.clone().with_digest(digest.to_string());
    if let Some(t) = theta {
        r = r.with_theta(t);
    }
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

/// Pins dense linear algebra and the rayon pool to `n` threads; `0` keeps
/// the linear algebra sequential.
pub fn set_threads(n: usize) -> Result<()> {
    if n == 0 {
        faer::set_global_parallelism(faer::Par::Seq);
        return Ok(());
    }
    faer::set_global_parallelism(faer::Par::rayon(n));
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}
