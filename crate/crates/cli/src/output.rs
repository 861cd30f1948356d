//! Artifact staging and the run manifest.
//!
//! Artifacts are written into a sibling staging directory that replaces the
//! output directory only after every file is written. A failed run removes
//! the staging directory and leaves any previous output untouched.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Settings;

const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize)]
struct ArtifactEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, E: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a Settings,
    extra: &'a E,
    input_sha256: Option<String>,
    artifacts: Vec<ArtifactEntry>,
}

pub struct Staging {
    target: PathBuf,
    dir: PathBuf,
    artifacts: Vec<ArtifactEntry>,
    committed: bool,
}

impl Staging {
    /// `target` must be absent, empty, or a previous output directory
    /// (one holding a manifest).
    pub fn new(target: &Path) -> Result<Self> {
        if target.exists() {
            let is_output = target.join(MANIFEST).is_file();
            let is_empty = std::fs::read_dir(target)
                .with_context(|| format!("reading {}", target.display()))?
                .next()
                .is_none();
            if !is_output && !is_empty {
                bail!(
                    "refusing to replace {}: not empty and not a previous output directory",
                    target.display()
                );
            }
        }
        let name = target
            .file_name()
            .context("output path has no final component")?
            .to_string_lossy();
        let dir = target.with_file_name(format!(".{name}.staging-{}", std::process::id()));
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            target: target.to_path_buf(),
            dir,
            artifacts: Vec::new(),
            committed: false,
        })
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(ArtifactEntry {
            path: rel.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len(),
        });
        Ok(())
    }

    /// Writes the manifest and moves the staging directory into place.
    pub fn commit<E: Serialize>(
        mut self,
        command: &str,
        settings: &Settings,
        extra: &E,
        input_bytes: Option<&[u8]>,
    ) -> Result<PathBuf> {
        let config_json = serde_json::to_vec(&(command, settings, extra))?;
        let mut artifacts = std::mem::take(&mut self.artifacts);
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool: "crisis",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: settings.seed,
            config_sha256: sha256_hex(&config_json),
            config: settings,
            extra,
            input_sha256: input_bytes.map(sha256_hex),
            artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.dir.join(MANIFEST), text)?;
        if self.target.exists() {
            std::fs::remove_dir_all(&self.target)
                .with_context(|| format!("removing previous {}", self.target.display()))?;
        }
        std::fs::rename(&self.dir, &self.target).with_context(|| {
            format!("moving {} to {}", self.dir.display(), self.target.display())
        })?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.dir);
        }
    }
}
