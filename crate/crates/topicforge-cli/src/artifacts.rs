use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::fail::Failure;
use crate::settings::SettingEcho;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// A run's output directory. Every file lands under a `.partial` name and
/// is renamed into place only once fully written, so a crashed run leaves
/// no artifact that looks finished.
pub struct RunDir {
    root: PathBuf,
    inputs: Vec<ArtifactEntry>,
    outputs: Vec<ArtifactEntry>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(root).map_err(|error| {
            Failure::Io(format!("cannot create output dir {}: {error}", root.display()))
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Record an input file's identity in the manifest.
    pub fn note_input(&mut self, path: &Path) -> Result<(), Failure> {
        let bytes = fs::read(path).map_err(|error| {
            Failure::Io(format!("cannot read input {}: {error}", path.display()))
        })?;
        self.inputs.push(ArtifactEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Write one output atomically and record it in the manifest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.root.join(name);
        let partial = self.root.join(format!("{name}.partial"));
        fs::write(&partial, bytes).map_err(|error| {
            Failure::Io(format!("cannot write {}: {error}", partial.display()))
        })?;
        fs::rename(&partial, &path).map_err(|error| {
            Failure::Io(format!("cannot finalize {}: {error}", path.display()))
        })?;
        self.outputs.push(ArtifactEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    /// Write `manifest.json`: inputs, the effective configuration with
    /// provenance, and per-output digests. Deliberately timestamp-free so
    /// identical runs produce identical manifests.
    pub fn finish(mut self, config: BTreeMap<String, SettingEcho>) -> Result<(), Failure> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            inputs: &'a [ArtifactEntry],
            config: BTreeMap<String, SettingEcho>,
            outputs: &'a [ArtifactEntry],
        }
        let manifest = Manifest {
            inputs: &self.inputs,
            config,
            outputs: &self.outputs,
        };
        let mut body = serde_json::to_vec_pretty(&manifest)
            .map_err(|error| Failure::Io(format!("cannot encode manifest: {error}")))?;
        body.push(b'\n');

        let partial = self.root.join("manifest.json.partial");
        let path = self.root.join("manifest.json");
        fs::write(&partial, &body).map_err(|error| {
            Failure::Io(format!("cannot write {}: {error}", partial.display()))
        })?;
        fs::rename(&partial, &path).map_err(|error| {
            Failure::Io(format!("cannot finalize {}: {error}", path.display()))
        })?;
        self.outputs.clear();
        Ok(())
    }
}
