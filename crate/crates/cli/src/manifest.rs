//! `manifest.json`: tool version, resolved configuration and output digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    /// File name -> hex SHA-256.
    outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Writes `dir/manifest.json` listing `outputs` (paths inside `dir`).
pub fn write(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    outputs: &[PathBuf],
) -> anyhow::Result<PathBuf> {
    let mut digests = BTreeMap::new();
    for p in outputs {
        let name = p
            .strip_prefix(dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned();
        digests.insert(name, sha256_hex(p)?);
    }
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        outputs: digests,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
