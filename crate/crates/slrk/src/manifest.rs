//! Run manifests: a JSON record written beside every set of CLI outputs.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Every parameter the outputs depend on, defaults included.
    pub parameters: serde_json::Value,
    pub seeds: Vec<u64>,
    pub artifact_version: String,
    pub outputs: Vec<PathBuf>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, parameters: serde_json::Value) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            parameters,
            seeds: Vec::new(),
            artifact_version: ARTIFACT_VERSION.to_string(),
            outputs: Vec::new(),
            duration_seconds: 0.0,
        }
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn finish(&mut self, outputs: Vec<PathBuf>, elapsed: Duration) {
        self.outputs = outputs;
        self.duration_seconds = elapsed.as_secs_f64();
    }

    /// Equality ignoring the wall-clock time.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        RunManifest {
            duration_seconds: 0.0,
            ..self.clone()
        } == RunManifest {
            duration_seconds: 0.0,
            ..other.clone()
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

/// `dir/boundary.csv` → `dir/boundary.manifest.json`.
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
    fn manifest_name() {
        assert_eq!(manifest_path_for(Path::new("out/b.csv")), Path::new("out/b.manifest.json"));
        assert_eq!(manifest_path_for(Path::new("conv")), Path::new("conv.manifest.json"));
    }

    #[test]
    fn duration_is_not_part_of_identity() {
        let mut a = RunManifest::new("verify", serde_json::json!({"order": 6}));
        let mut b = a.clone();
        a.finish(vec!["x".into()], Duration::from_millis(3));
        b.finish(vec!["x".into()], Duration::from_millis(900));
        assert!(a.same_run(&b));
        b.seeds.push(1);
        assert!(!a.same_run(&b));
    }
}
