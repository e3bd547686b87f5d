use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Conventional manifest file name inside an output directory.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Record of one command invocation and the files it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub dataset_fingerprint: String,
    pub outputs: Vec<OutputFile>,
    pub wall_time: f64,
    /// Per-step seconds where the command measures them.
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, dataset_fingerprint: String) -> Self {
        Self {
            command: command.to_string(),
            config,
            dataset_fingerprint,
            outputs: Vec::new(),
            wall_time: 0.0,
            timings: BTreeMap::new(),
        }
    }

    /// Hashes a written file and lists it relative to `dir`.
    pub fn record(&mut self, dir: &Path, path: &Path) -> Result<()> {
        let (bytes, sha256) = sha256_file(path)?;
        if bytes == 0 {
            return Err(Error::Invariant(format!("output {} is empty", path.display())));
        }
        let rel = path.strip_prefix(dir).unwrap_or(path);
        self.outputs.push(OutputFile {
            path: rel.display().to_string(),
            bytes,
            sha256,
        });
        Ok(())
    }

    pub fn output_paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.outputs.iter().map(|o| dir.join(&o.path)).collect()
    }

    /// Every listed output exists, is non-empty and still has its hash.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for o in &self.outputs {
            let (bytes, sha) = sha256_file(&dir.join(&o.path))?;
            if bytes == 0 || sha != o.sha256 {
                return Err(Error::Invariant(format!(
                    "output {} changed since the manifest was written",
                    o.path
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_and_verifies_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.csv");
        std::fs::write(&f, "1,2\n").unwrap();
        let mut m = RunManifest::new("gen", serde_json::json!({"m": 2}), "abc".into());
        m.record(dir.path(), &f).unwrap();
        assert_eq!(m.outputs[0].path, "a.csv");
        assert_eq!(m.outputs[0].bytes, 4);
        m.verify(dir.path()).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        m.write(&p).unwrap();
        assert_eq!(RunManifest::read(&p).unwrap(), m);

        std::fs::write(&f, "1,3\n").unwrap();
        assert!(m.verify(dir.path()).is_err());
        let empty = dir.path().join("e.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(m.record(dir.path(), &empty).is_err());
    }
}
