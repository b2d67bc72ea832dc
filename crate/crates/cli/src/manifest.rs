//! Run manifests: the resolved config, command, and artifact digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.toml";
pub const CONFIG: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Rerun with `lmclab <command> --config <config>`.
    pub config: String,
    pub config_sha256: String,
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects artifacts for one output directory.
pub struct Outputs {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), digests: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.digests.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    pub fn finish(self, command: &str, seed: u64, config_toml: &str) -> Result<Manifest> {
        let path = self.dir.join(CONFIG);
        fs::write(&path, config_toml).with_context(|| format!("writing {}", path.display()))?;
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: CONFIG.to_string(),
            config_sha256: sha256_hex(config_toml.as_bytes()),
            artifacts: self.digests,
        };
        let text = toml::to_string(&manifest).context("serializing manifest")?;
        fs::write(self.dir.join(MANIFEST), text).context("writing manifest")?;
        Ok(manifest)
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Names of artifacts in `dir` whose digest differs from this manifest.
    pub fn mismatches(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for (name, digest) in &self.artifacts {
            match fs::read(dir.join(name)) {
                Ok(bytes) if sha256_hex(&bytes) == *digest => {}
                _ => bad.push(name.clone()),
            }
        }
        Ok(bad)
    }
}
