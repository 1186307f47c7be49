//! Subcommand implementations.

pub mod bound_study;
pub mod build_dataset;
pub mod eval;
pub mod gen;
pub mod sweep;
pub mod train;

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DVector;
use nsdpo_core::env::{self, DriftSchedule, EnvConfig, OfflineDataset, TestPair};
use serde::{Deserialize, Serialize};

/// Synthetic data generation config; shared by `gen`, `sweep` and
/// `bound-study`, and echoed in manifests so schedules are reconstructible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub d_x: usize,
    pub n_actions: u32,
    #[serde(rename = "T")]
    pub horizon: u32,
    pub points_per_step: u32,
    pub n_test: u32,
    pub tau: f64,
    /// `drift` (quarter-circle rotation between the breakpoints) or
    /// `stationary` (constant pre-drift parameter).
    pub schedule: String,
    pub drift_start: u32,
    pub drift_end: u32,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            d_x: 4,
            n_actions: 16,
            horizon: 101,
            points_per_step: 20,
            n_test: 100,
            tau: 1.0,
            schedule: "drift".into(),
            drift_start: 33,
            drift_end: 66,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn env(&self) -> Result<EnvConfig> {
        Ok(EnvConfig::new(self.d_x, self.n_actions)?)
    }

    pub fn build_schedule(&self) -> Result<DriftSchedule> {
        match self.schedule.as_str() {
            "drift" => Ok(DriftSchedule::circular_with_breaks(
                self.d_x,
                self.horizon,
                self.drift_start,
                self.drift_end,
            )?),
            "stationary" => {
                let mut theta = DVector::zeros(2 * self.d_x);
                for k in 0..self.d_x {
                    theta[2 * k] = 1.0;
                }
                Ok(DriftSchedule::constant(theta, self.horizon)?)
            }
            other => bail!("unknown schedule '{other}'; expected drift or stationary"),
        }
    }

    pub fn sample_config(&self) -> Result<env::SampleConfig> {
        Ok(env::SampleConfig::new(
            self.env()?,
            self.tau,
            self.points_per_step,
            self.n_test,
            self.seed,
        ))
    }
}

/// Trained parameter vector as written to `params.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsFile {
    pub theta: Vec<f64>,
    pub tau: f64,
    pub objective: String,
}

impl ParamsFile {
    pub fn theta_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.theta.clone())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// The files a `gen` run leaves behind.
pub struct RunData {
    pub header: env::io::DatasetHeader,
    pub dataset: OfflineDataset,
    pub test_set: Vec<TestPair>,
    pub gen_config: Option<GenConfig>,
}

/// Loads `train.jsonl`, `test.jsonl` and (when present) the gen manifest
/// from a data directory.
pub fn load_run_data(dir: &Path) -> Result<RunData> {
    let (header, dataset) = env::io::read_dataset_file(&dir.join("train.jsonl"))
        .with_context(|| format!("loading {}", dir.join("train.jsonl").display()))?;
    let (_, test_set) = env::io::read_test_set_file(&dir.join("test.jsonl"))
        .with_context(|| format!("loading {}", dir.join("test.jsonl").display()))?;
    let manifest_path = dir.join("manifest.json");
    let gen_config = if manifest_path.exists() {
        let manifest: crate::config::Manifest<GenConfig> =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
        Some(manifest.config)
    } else {
        None
    };
    Ok(RunData {
        header,
        dataset,
        test_set,
        gen_config,
    })
}
