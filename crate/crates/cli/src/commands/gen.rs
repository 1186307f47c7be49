//! `nsdpo gen`: sample a synthetic drifting-preference dataset to JSONL.

use std::path::Path;

use anyhow::Result;
use clap::Args;
use nsdpo_core::env;

use super::GenConfig;
use crate::config;

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Context dimension d_x.
    #[arg(long)]
    pub d_x: Option<usize>,
    /// Number of actions.
    #[arg(long)]
    pub n_actions: Option<u32>,
    /// Evaluation step T; training data covers 1..T-1.
    #[arg(long, short = 'T')]
    pub horizon: Option<u32>,
    /// Datapoints per training step.
    #[arg(long)]
    pub points_per_step: Option<u32>,
    /// Held-out pairs at the evaluation step.
    #[arg(long)]
    pub n_test: Option<u32>,
    /// KL coefficient of the data-generating model.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Drift shape: drift | stationary.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Last step before the rotation starts.
    #[arg(long)]
    pub drift_start: Option<u32>,
    /// Step at which the rotation completes.
    #[arg(long)]
    pub drift_end: Option<u32>,
}

impl GenArgs {
    pub fn resolve(&self, config_file: Option<&Path>, seed: Option<u64>) -> Result<GenConfig> {
        let mut cfg = GenConfig::default();
        if let Some(path) = config_file {
            cfg = config::overlay_config(&cfg, path)?;
        }
        if let Some(v) = self.d_x {
            cfg.d_x = v;
        }
        if let Some(v) = self.n_actions {
            cfg.n_actions = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.points_per_step {
            cfg.points_per_step = v;
        }
        if let Some(v) = self.n_test {
            cfg.n_test = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = &self.schedule {
            cfg.schedule = v.clone();
        }
        if let Some(v) = self.drift_start {
            cfg.drift_start = v;
        }
        if let Some(v) = self.drift_end {
            cfg.drift_end = v;
        }
        if let Some(v) = seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

/// Generates the dataset files for a resolved config; shared with `sweep`
/// and `bound-study`, which sample in memory.
pub fn generate(cfg: &GenConfig) -> Result<(env::io::DatasetHeader, env::OfflineDataset, Vec<env::TestPair>)> {
    let schedule = cfg.build_schedule()?;
    let sample_cfg = cfg.sample_config()?;
    let dataset = env::sample_dataset(&schedule, &sample_cfg)?;
    let test_set = env::sample_test_set(&schedule, &sample_cfg)?;
    let header = env::io::DatasetHeader {
        d_x: cfg.d_x,
        n_actions: cfg.n_actions,
        horizon: cfg.horizon,
        tau: cfg.tau,
        schedule_descriptor: schedule.descriptor(),
        seed: cfg.seed,
    };
    Ok((header, dataset, test_set))
}

pub fn run(args: &GenArgs, config_file: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = args.resolve(config_file, seed)?;
    config::ensure_out_dir(out)?;
    let (header, dataset, test_set) = generate(&cfg)?;
    env::io::write_dataset_file(&out.join("train.jsonl"), &header, &dataset)?;
    env::io::write_test_set_file(&out.join("test.jsonl"), &header, &test_set)?;
    config::write_manifest(out, "gen", &cfg)?;
    println!(
        "gen: wrote {} train rows and {} test rows to {}",
        dataset.len(),
        test_set.len(),
        out.display()
    );
    Ok(())
}
