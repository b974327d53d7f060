use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub name: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run. Deliberately free of wall-clock
/// times and absolute paths, so equal inputs give equal manifests.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: Value,
    /// Hash over the names and hashes of all inputs.
    pub data_fingerprint: Option<String>,
    pub inputs: Vec<InputFile>,
    pub seed: Option<u64>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            config,
            data_fingerprint: None,
            inputs: Vec::new(),
            seed: None,
            artifacts: Vec::new(),
        }
    }

    /// Records input files; their order does not affect the fingerprint.
    pub fn with_inputs(mut self, files: &[PathBuf]) -> CliResult<Self> {
        for f in files {
            self.inputs.push(InputFile {
                name: file_name(f),
                sha256: sha256_file(f)?,
            });
        }
        self.inputs.sort_by(|a, b| a.name.cmp(&b.name));
        let mut h = Sha256::new();
        for i in &self.inputs {
            h.update(i.name.as_bytes());
            h.update([0]);
            h.update(i.sha256.as_bytes());
            h.update([b'\n']);
        }
        self.data_fingerprint = Some(hex::encode(h.finalize()));
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn artifact(mut self, name: impl Into<String>) -> Self {
        self.artifacts.push(name.into());
        self
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// `<dir>/<stem>.manifest.json` for runs whose output is a single file.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_ignores_input_order_but_not_content() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        fs::write(&a, "1").unwrap();
        fs::write(&b, "2").unwrap();
        let m1 = RunManifest::new("x", Value::Null).with_inputs(&[a.clone(), b.clone()]).unwrap();
        let m2 = RunManifest::new("x", Value::Null).with_inputs(&[b.clone(), a.clone()]).unwrap();
        assert_eq!(m1.data_fingerprint, m2.data_fingerprint);
        fs::write(&b, "3").unwrap();
        let m3 = RunManifest::new("x", Value::Null).with_inputs(&[a, b]).unwrap();
        assert_ne!(m1.data_fingerprint, m3.data_fingerprint);
    }

    #[test]
    fn single_file_manifest_name() {
        assert_eq!(manifest_path_for(Path::new("out/grid.json")), Path::new("out/grid.manifest.json"));
    }
}
