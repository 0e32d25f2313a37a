//! Output directory bookkeeping and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunManifest {
    pub config_path: Option<String>,
    pub outputs_dir: String,
    pub scenario_id: String,
    /// File name to SHA-256 of its contents.
    pub checksums: BTreeMap<String, String>,
}

/// Collects emitted files and writes them, then the manifest, into one directory.
pub struct Outputs {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Outputs {
    pub fn new(dir: &Path, config_path: Option<&Path>, scenario_id: impl Into<String>) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                config_path: config_path.map(|p| p.display().to_string()),
                outputs_dir: dir.display().to_string(),
                scenario_id: scenario_id.into(),
                checksums: BTreeMap::new(),
            },
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.checksums.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Render with `f` into memory, then write.
    pub fn emit(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> foldbs_core::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Stable file-name fragment for a point, e.g. `-0.0500`.
pub fn tag(v: f64) -> String {
    format!("{v:+.4}").replace('+', "")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn tags() {
        assert_eq!(tag(-0.05), "-0.0500");
        assert_eq!(tag(0.05), "0.0500");
        assert_eq!(tag(-0.3), "-0.3000");
    }
}
