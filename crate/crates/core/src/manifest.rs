//! Run manifests: what a command was asked to do, fully resolved, and the
//! SHA-256 over everything its outputs depend on. The output directory and
//! worker count do not enter the hash; results do not depend on them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// An input file identified by content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_path: Option<String>,
    /// `--set` overrides in command-line order.
    pub overrides: Vec<String>,
    pub output_dir: Option<String>,
    /// Seed for randomized test data (noise); 0 when unused.
    pub seed: u64,
    /// Every parameter after defaults, file and overrides were merged.
    pub resolved: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    /// Files written by the run, relative to `output_dir`.
    pub outputs: Vec<String>,
    pub workers: Option<usize>,
    pub sha256: String,
}

#[derive(Serialize)]
struct HashedPart<'a> {
    tool_version: &'a str,
    command: &'a str,
    overrides: &'a [String],
    seed: u64,
    resolved: &'a serde_json::Value,
    inputs: Vec<&'a str>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_path: Option<&Path>,
        overrides: Vec<String>,
        seed: u64,
        resolved: &impl Serialize,
        inputs: Vec<InputDigest>,
    ) -> Result<Self> {
        let resolved = serde_json::to_value(resolved)
            .map_err(|e| Error::Input(format!("cannot record parameters: {e}")))?;
        let mut m = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            overrides,
            output_dir: None,
            seed,
            resolved,
            inputs,
            outputs: Vec::new(),
            workers: None,
            sha256: String::new(),
        };
        m.sha256 = m.compute_hash();
        Ok(m)
    }

    /// Hash over version, command, overrides, seed, resolved parameters and
    /// input contents. Paths (config, inputs, output) are excluded.
    pub fn compute_hash(&self) -> String {
        let part = HashedPart {
            tool_version: &self.tool_version,
            command: &self.command,
            overrides: &self.overrides,
            seed: self.seed,
            resolved: &self.resolved,
            inputs: self.inputs.iter().map(|i| i.sha256.as_str()).collect(),
        };
        let bytes = serde_json::to_vec(&part).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_paths_and_workers() {
        let a = RunManifest::new("simulate", Some(Path::new("a.toml")), vec!["x=1".into()], 7, &[1.0, 2.0], vec![]).unwrap();
        let mut b = RunManifest::new("simulate", Some(Path::new("/elsewhere/b.toml")), vec!["x=1".into()], 7, &[1.0, 2.0], vec![]).unwrap();
        b.output_dir = Some("/tmp/out".into());
        b.workers = Some(3);
        assert_eq!(a.sha256, b.compute_hash());
        assert_eq!(a.sha256.len(), 64);
    }

    #[test]
    fn hash_tracks_parameters_seed_and_inputs() {
        let base = RunManifest::new("simulate", None, vec![], 7, &[1.0, 2.0], vec![]).unwrap();
        let variants = [
            RunManifest::new("analyze", None, vec![], 7, &[1.0, 2.0], vec![]).unwrap(),
            RunManifest::new("simulate", None, vec!["x=1".into()], 7, &[1.0, 2.0], vec![]).unwrap(),
            RunManifest::new("simulate", None, vec![], 8, &[1.0, 2.0], vec![]).unwrap(),
            RunManifest::new("simulate", None, vec![], 7, &[1.0, 2.5], vec![]).unwrap(),
            RunManifest::new(
                "simulate",
                None,
                vec![],
                7,
                &[1.0, 2.0],
                vec![InputDigest { path: "m.csv".into(), sha256: "ab".into() }],
            )
            .unwrap(),
        ];
        for v in variants {
            assert_ne!(v.sha256, base.sha256);
        }
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("in.txt");
        std::fs::write(&f, "abc").unwrap();
        let d = InputDigest::of(&f).unwrap();
        assert_eq!(d.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let m = RunManifest::new("report", None, vec![], 0, &"x", vec![d]).unwrap();
        let p = m.write(dir.path()).unwrap();
        assert_eq!(RunManifest::read(&p).unwrap(), m);
    }

    #[test]
    fn hash_verifies_after_reading_back() {
        let dir = tempfile::tempdir().unwrap();
        // Needs correctly rounded float parsing to read back bit-exactly.
        let m = RunManifest::new("derive", None, vec![], 0, &[0.24688713622616898_f64], vec![]).unwrap();
        let back = RunManifest::read(&m.write(dir.path()).unwrap()).unwrap();
        assert_eq!(back.compute_hash(), m.sha256);
    }
}
