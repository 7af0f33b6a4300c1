//! Per-directory record of what produced each output file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub runs: Vec<Run>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub command: String,
    pub args: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub point_seeds: Vec<u64>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Run {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            scenario: None,
            scenario_sha256: None,
            seed: None,
            point_seeds: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn with_scenario(mut self, path: &Path) -> Result<Self> {
        self.scenario = Some(path.display().to_string());
        self.scenario_sha256 = Some(sha256_file(path)?);
        Ok(self)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn load(dir: &Path) -> Result<Option<Manifest>> {
    let path = dir.join(MANIFEST_NAME);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let m = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Some(m))
}

/// Adds `run` to the manifest in `dir`, hashing the listed output files.
/// Entries of earlier runs for files rewritten by this one are dropped.
pub fn record(dir: &Path, mut run: Run, outputs: &[PathBuf]) -> Result<()> {
    for out in outputs {
        let meta = fs::metadata(out).with_context(|| format!("reading {}", out.display()))?;
        let rel = out.strip_prefix(dir).unwrap_or(out);
        run.artifacts.push(Artifact {
            path: rel.display().to_string(),
            sha256: sha256_file(out)?,
            bytes: meta.len(),
        });
    }
    let mut manifest = load(dir)?.unwrap_or_else(|| Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        runs: Vec::new(),
    });
    for old in &mut manifest.runs {
        old.artifacts.retain(|a| run.artifacts.iter().all(|b| b.path != a.path));
    }
    manifest.runs.retain(|r| !r.artifacts.is_empty());
    manifest.runs.push(run);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_NAME), text + "\n")
        .with_context(|| format!("writing manifest in {}", dir.display()))?;
    Ok(())
}

/// Checks every artifact listed in the manifest of `dir`. Returns the
/// number of files checked.
pub fn verify(dir: &Path) -> Result<usize> {
    let Some(manifest) = load(dir)? else {
        bail!("no {MANIFEST_NAME} in {}", dir.display());
    };
    let mut n = 0;
    for run in &manifest.runs {
        for a in &run.artifacts {
            let actual = sha256_file(&dir.join(&a.path))?;
            if actual != a.sha256 {
                bail!("checksum mismatch for {}", a.path);
            }
            n += 1;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rewritten_files_replace_old_entries() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        fs::write(&a, "1").unwrap();
        fs::write(&b, "2").unwrap();
        record(dir.path(), Run::new("first"), &[a.clone(), b.clone()]).unwrap();
        fs::write(&a, "3").unwrap();
        record(dir.path(), Run::new("second"), std::slice::from_ref(&a)).unwrap();
        let m = load(dir.path()).unwrap().unwrap();
        assert_eq!(m.runs.len(), 2);
        assert_eq!(m.runs[0].artifacts.len(), 1);
        assert_eq!(m.runs[0].artifacts[0].path, "b.csv");
        assert_eq!(verify(dir.path()).unwrap(), 2);
        fs::write(&b, "tampered").unwrap();
        assert!(verify(dir.path()).is_err());
    }
}
