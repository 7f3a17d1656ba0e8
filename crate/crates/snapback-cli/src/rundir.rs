//! Run directory layout and the single-writer lock.
//!
//! `runs/<name>/{features.csv, bundle.json, report.json, robustness.csv,
//! ablation.csv, plots/, failures.csv, config.echo}`

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn features_csv(&self) -> PathBuf {
        self.root.join("features.csv")
    }

    pub fn bundle_json(&self) -> PathBuf {
        self.root.join("bundle.json")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn scores_csv(&self) -> PathBuf {
        self.root.join("scores.csv")
    }

    pub fn robustness_csv(&self) -> PathBuf {
        self.root.join("robustness.csv")
    }

    pub fn ablation_csv(&self) -> PathBuf {
        self.root.join("ablation.csv")
    }

    pub fn failures_csv(&self) -> PathBuf {
        self.root.join("failures.csv")
    }

    pub fn config_echo(&self) -> PathBuf {
        self.root.join("config.echo")
    }

    pub fn pending_requests_csv(&self) -> PathBuf {
        self.root.join("pending_requests.csv")
    }

    pub fn plots_dir(&self) -> Result<PathBuf> {
        let dir = self.root.join("plots");
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn default_cache_root(&self) -> PathBuf {
        self.root.join("cache")
    }

    /// Exclusive lock: two commands writing one run directory concurrently
    /// is unsupported.
    pub fn lock(&self) -> Result<RunLock> {
        let path = self.root.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!(
                    "run directory {} is locked by another command (remove {} if stale)",
                    self.root.display(),
                    path.display()
                )
            }
            Err(e) => Err(e.into()),
        }
    }
}

pub struct RunLock {
    path: PathBuf,
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::new(dir.path().join("r1")).unwrap();
        let guard = run.lock().unwrap();
        assert!(run.lock().is_err());
        drop(guard);
        assert!(run.lock().is_ok());
    }
}
