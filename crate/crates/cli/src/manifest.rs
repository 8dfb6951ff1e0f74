use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dvmap_core::hashing::sha256_hex;
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = concat!("dvmap ", env!("CARGO_PKG_VERSION"));

/// Written next to a stage's artifacts once they are all in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct Input {
    pub path: PathBuf,
    /// Stage that produces this file, for the missing-artifact message.
    pub producer: Option<&'static str>,
}

impl Input {
    pub fn artifact(path: PathBuf, producer: &'static str) -> Self {
        Input {
            path,
            producer: Some(producer),
        }
    }

    pub fn external(path: PathBuf) -> Self {
        Input { path, producer: None }
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Names artifacts under the output directory relative to it, so manifests
/// do not depend on where the run lives.
fn display_key(out_dir: &Path, path: &Path) -> String {
    match path.strip_prefix(out_dir) {
        Ok(rel) => format!("$out/{}", rel.to_string_lossy().replace('\\', "/")),
        Err(_) => path.to_string_lossy().replace('\\', "/"),
    }
}

pub struct Stage<'a> {
    pub name: &'static str,
    pub out_dir: &'a Path,
    pub config: serde_json::Value,
    pub inputs: Vec<Input>,
}

impl Stage<'_> {
    pub fn dir(&self) -> PathBuf {
        self.out_dir.join(self.name.replace('-', "_"))
    }

    fn manifest_path(&self) -> PathBuf {
        self.dir().join("manifest.json")
    }

    fn hash_inputs(&self) -> Result<BTreeMap<String, String>> {
        let mut hashes = BTreeMap::new();
        for input in &self.inputs {
            if !input.path.is_file() {
                match input.producer {
                    Some(p) => bail!(
                        "missing upstream artifact {} (run `dvmap {p}` first)",
                        input.path.display()
                    ),
                    None => bail!("missing input file {}", input.path.display()),
                }
            }
            hashes.insert(display_key(self.out_dir, &input.path), file_sha256(&input.path)?);
        }
        Ok(hashes)
    }

    /// Runs `body` unless `resume` is set and the previous manifest matches
    /// the current inputs and config. `body` returns the files it wrote.
    pub fn run(self, resume: bool, body: impl FnOnce(&Path) -> Result<Vec<PathBuf>>) -> Result<()> {
        let inputs = self.hash_inputs()?;
        let manifest_path = self.manifest_path();
        if resume && manifest_path.is_file() {
            let previous: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)
                .with_context(|| format!("parsing {}", manifest_path.display()))?;
            if previous.inputs == inputs && previous.config == self.config && previous.tool_version == TOOL_VERSION {
                for (key, hash) in &previous.outputs {
                    let rel = key.strip_prefix("$out/").unwrap_or(key);
                    let path = self.out_dir.join(rel);
                    let actual = file_sha256(&path).ok();
                    if actual.as_deref() != Some(hash.as_str()) {
                        bail!(
                            "artifact {} does not match its manifest; delete {} to rebuild the stage",
                            path.display(),
                            manifest_path.display()
                        );
                    }
                }
                tracing::info!(stage = self.name, "inputs unchanged; skipping stage");
                return Ok(());
            }
            tracing::info!(stage = self.name, "inputs or config changed; rerunning stage");
        }
        let dir = self.dir();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        // a stale manifest must not vouch for half-written outputs
        let _ = std::fs::remove_file(&manifest_path);
        let written = body(&dir)?;
        let mut outputs = BTreeMap::new();
        for path in &written {
            outputs.insert(display_key(self.out_dir, path), file_sha256(path)?);
        }
        let manifest = Manifest {
            stage: self.name.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config: self.config,
            inputs,
            outputs,
        };
        std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        tracing::info!(stage = self.name, artifacts = written.len(), "stage complete");
        Ok(())
    }
}
