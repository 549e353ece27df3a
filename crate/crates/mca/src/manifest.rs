//! Run manifests: everything needed to reproduce a run's outputs.
//! No timestamps or host details, so identical runs give identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::report::write_json;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    /// SHA-256 of every input file read, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_inputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
        for path in paths {
            self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        }
        Ok(())
    }

    pub fn add_output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn write(&mut self, out_dir: &Path) -> Result<PathBuf> {
        self.outputs.sort();
        self.outputs.dedup();
        let path = out_dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn deterministic_output() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let mut a = Manifest::new("sweep", &cfg);
        a.add_output("b.csv");
        a.add_output("a.csv");
        let pa = a.write(dir.path()).unwrap();
        let first = fs::read(&pa).unwrap();
        let mut b = Manifest::new("sweep", &cfg);
        b.add_output("a.csv");
        b.add_output("b.csv");
        b.write(dir.path()).unwrap();
        assert_eq!(first, fs::read(&pa).unwrap());
    }
}
