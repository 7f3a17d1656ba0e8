//! Pipeline configuration: TOML file, CLI-flag overrides, and the effective
//! config echoed into the run directory for provenance.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use snapback_core::reconstruct::{ReconstructionParams, StrengthSchedule, DEFAULT_STRENGTHS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    /// Image paths in the manifest are resolved relative to this directory.
    pub data_root: Option<PathBuf>,
    pub cache_root: Option<PathBuf>,
    pub output_root: PathBuf,
    pub run_name: String,
    pub strengths: Vec<f64>,
    pub total_steps: u32,
    pub guidance: f64,
    pub prompt: String,
    pub backend: String,
    pub provider: String,
    pub seed: u64,
    pub test_fraction: f64,
    pub k: usize,
    pub reg_strength: f64,
    pub ssim_tau: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            data_root: None,
            cache_root: None,
            output_root: PathBuf::from("runs"),
            run_name: "default".into(),
            strengths: DEFAULT_STRENGTHS.to_vec(),
            total_steps: 50,
            guidance: 1.0,
            prompt: String::new(),
            backend: "mock-smooth".into(),
            provider: "surrogate".into(),
            seed: 0,
            test_fraction: 0.35,
            k: 5,
            reg_strength: 1.0,
            ssim_tau: 0.80,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, toml::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_root.join(&self.run_name)
    }

    pub fn schedule(&self) -> Result<StrengthSchedule> {
        Ok(StrengthSchedule::new(self.strengths.clone())?)
    }

    pub fn reconstruction_params(&self) -> ReconstructionParams {
        ReconstructionParams {
            total_steps: self.total_steps,
            guidance_scale: self.guidance,
            seed: self.seed,
            backend_id: self.backend.clone(),
            prompt: self.prompt.clone(),
        }
    }
}
