//! Per-command record of inputs, run statuses and produced artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{sha256_file, write_atomic};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub plan_hash: String,
    pub seed: u64,
    pub status: String,
    pub wall_clock_secs: f64,
    pub runs_ok: usize,
    pub runs_skipped: usize,
    pub runs_failed: usize,
    pub failures: Vec<String>,
    pub artifacts: Vec<Artifact>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str, plan_hash: String, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            plan_hash,
            seed,
            status: "running".into(),
            wall_clock_secs: 0.0,
            runs_ok: 0,
            runs_skipped: 0,
            runs_failed: 0,
            failures: Vec::new(),
            artifacts: Vec::new(),
            started: Some(Instant::now()),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("manifest_{command}.json")
    }

    pub fn add_artifact(&mut self, out: &Path, path: &Path) -> Result<()> {
        let bytes = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
        let rel = path.strip_prefix(out).unwrap_or(path).to_path_buf();
        self.artifacts.push(Artifact {
            path: rel,
            sha256: sha256_file(path)?,
            bytes,
        });
        Ok(())
    }

    pub fn add_artifacts(&mut self, out: &Path, paths: &[PathBuf]) -> Result<()> {
        paths.iter().try_for_each(|p| self.add_artifact(out, p))
    }

    pub fn count(&mut self, ok: usize, skipped: usize, failed: usize) {
        self.runs_ok += ok;
        self.runs_skipped += skipped;
        self.runs_failed += failed;
    }

    /// Stamp the wall-clock time and status, then write the manifest.
    pub fn finish(&mut self, out: &Path, ok: bool) -> Result<PathBuf> {
        if let Some(t) = self.started {
            self.wall_clock_secs = t.elapsed().as_secs_f64();
        }
        self.status = if ok { "ok" } else { "failed" }.into();
        let path = out.join(Self::file_name(&self.command));
        write_atomic(&path, &serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })
    }

    /// Check that every listed artifact exists and still matches its hash.
    pub fn verify(&self, out: &Path) -> Result<()> {
        for a in &self.artifacts {
            let p = out.join(&a.path);
            let actual = sha256_file(&p)?;
            if actual != a.sha256 {
                return Err(Error::Data(format!("{} changed since the run", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.csv");
        std::fs::write(&f, "x\n1\n").unwrap();
        let mut m = RunManifest::start("test", "h".into(), 1);
        m.add_artifact(dir.path(), &f).unwrap();
        assert_eq!(m.artifacts[0].path, PathBuf::from("a.csv"));
        let written = m.finish(dir.path(), true).unwrap();
        let back = RunManifest::load(&written).unwrap();
        assert_eq!(back.status, "ok");
        back.verify(dir.path()).unwrap();
        std::fs::write(&f, "x\n2\n").unwrap();
        assert!(back.verify(dir.path()).is_err());
    }
}
