//! Content-addressed result cache keyed by a digest of the canonical config.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, RawConfig};
use crate::experiments::Files;

/// Bumped whenever an output format or numerical default changes.
pub const FORMAT_VERSION: &str = "bslab-results-v1";

pub const CACHE_ENV: &str = "BSLAB_CACHE_DIR";

/// Canonical JSON of the semantic part of a config: sorted keys, typed numbers,
/// without the output location and cache switch.
pub fn canonical_json(raw: &RawConfig) -> String {
    let mut value = serde_json::to_value(raw).expect("config serializes");
    if let Some(obj) = value.as_object_mut() {
        obj.remove("output_dir");
        obj.remove("cache");
    }
    // serde_json's default map is ordered by key
    value.to_string()
}

pub fn cache_key_versioned(config: &ExperimentConfig, version: &str) -> String {
    let mut h = Sha256::new();
    h.update(version.as_bytes());
    h.update(b"\n");
    h.update(canonical_json(&config.raw).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cache_key(config: &ExperimentConfig) -> String {
    cache_key_versioned(config, FORMAT_VERSION)
}

pub fn default_cache_root() -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".bslab-cache"))
}

pub fn entry_dir(root: &Path, digest: &str) -> PathBuf {
    root.join(digest)
}

/// Files of a cached entry, or `None` when the digest was never stored.
pub fn lookup(root: &Path, digest: &str) -> Result<Option<Files>> {
    let dir = entry_dir(root, digest);
    if !dir.join("report.txt").is_file() {
        return Ok(None);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(&dir).with_context(|| format!("reading cache entry {}", dir.display()))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let bytes = fs::read(entry.path()).with_context(|| format!("reading {}", entry.path().display()))?;
        files.push((name, bytes));
    }
    files.sort();
    Ok(Some(files))
}

/// Writes the entry into a private temporary directory first and renames it
/// into place, so concurrent runs of one digest never see partial entries.
pub fn store(root: &Path, digest: &str, files: &[(String, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(root).with_context(|| format!("creating cache root {}", root.display()))?;
    let final_dir = entry_dir(root, digest);
    if final_dir.exists() {
        return Ok(());
    }
    let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    let tmp = root.join(format!(".tmp-{digest}-{}-{nanos}", std::process::id()));
    fs::create_dir_all(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    for (name, bytes) in files {
        let path = tmp.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    if fs::rename(&tmp, &final_dir).is_err() {
        // another run stored the same digest first
        let _ = fs::remove_dir_all(&tmp);
        if !final_dir.exists() {
            anyhow::bail!("could not move cache entry into {}", final_dir.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    const BASE: &str = r#"
[measure]
family = "circle"
size = 512
[kernel]
l = 0.75
[weight]
preset = "scalar_const"
c = 1.0
[experiment]
name = "weyl_check"
"#;

    const REORDERED: &str = r#"
[experiment]
name = "weyl_check"
[weight]
c = 1.0
preset = "scalar_const"
[kernel]
l = 0.75
[measure]
size = 512
family = "circle"
"#;

    #[test]
    fn digest_properties() {
        let a = parse_config(BASE).unwrap();
        let b = parse_config(REORDERED).unwrap();
        assert_eq!(cache_key(&a), cache_key(&b));
        assert_eq!(cache_key(&a).len(), 64);

        let c = parse_config(&BASE.replace("512", "513")).unwrap();
        assert_ne!(cache_key(&a), cache_key(&c));
        assert_ne!(cache_key(&a), cache_key_versioned(&a, "bslab-results-v2"));

        let d = parse_config(&format!("output_dir = \"elsewhere\"\ncache = false\n{BASE}")).unwrap();
        assert_eq!(cache_key(&a), cache_key(&d));

        let e = parse_config(&BASE.replace("c = 1.0", "c = 1")).unwrap();
        assert_eq!(cache_key(&a), cache_key(&e));
    }

    #[test]
    fn store_and_lookup() {
        let dir = tempfile::tempdir().unwrap();
        assert!(lookup(dir.path(), "d1").unwrap().is_none());
        let files = vec![("a.csv".to_string(), b"x\n".to_vec()), ("report.txt".to_string(), b"k = v\n".to_vec())];
        store(dir.path(), "d1", &files).unwrap();
        store(dir.path(), "d1", &files).unwrap();
        assert_eq!(lookup(dir.path(), "d1").unwrap().unwrap(), files);
        let leftovers = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
