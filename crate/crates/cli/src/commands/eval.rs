//! `nsdpo eval`: score saved parameters on a generated test set, emitting
//! flat metric records.

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use nalgebra::DVector;
use nsdpo_core::metrics::{expected_regret, reward_accuracy, MetricRecord};
use serde::{Deserialize, Serialize};

use super::{load_run_data, ParamsFile};
use crate::config;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory holding test.jsonl and the gen manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// params.json produced by `train`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Monte-Carlo contexts for the expected-regret estimate.
    #[arg(long)]
    pub n_contexts: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub data: PathBuf,
    pub params: PathBuf,
    pub run_id: String,
    pub n_contexts: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("."),
            params: PathBuf::from("params.json"),
            run_id: "eval".into(),
            n_contexts: 10_000,
            seed: 0,
        }
    }
}

impl EvalArgs {
    pub fn resolve(&self, config_file: Option<&Path>, seed: Option<u64>) -> Result<EvalConfig> {
        let mut cfg = EvalConfig::default();
        if let Some(path) = config_file {
            cfg = config::overlay_config(&cfg, path)?;
        }
        if let Some(v) = &self.data {
            cfg.data = v.clone();
        }
        if let Some(v) = &self.params {
            cfg.params = v.clone();
        }
        if let Some(v) = &self.run_id {
            cfg.run_id = v.clone();
        }
        if let Some(v) = self.n_contexts {
            cfg.n_contexts = v;
        }
        if let Some(v) = seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

pub fn run(args: &EvalArgs, config_file: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = args.resolve(config_file, seed)?;
    config::ensure_out_dir(out)?;
    let data = load_run_data(&cfg.data)?;
    let params = ParamsFile::read(&cfg.params)?;
    let theta = params.theta_vector();
    let theta_ref = DVector::zeros(theta.len());

    let mut records = vec![MetricRecord {
        run_id: cfg.run_id.clone(),
        metric: "reward_accuracy".into(),
        value: reward_accuracy(&theta, &theta_ref, &data.test_set, params.tau),
        std_error: None,
    }];

    // Expected regret needs the generating schedule; available when the data
    // directory carries its gen manifest.
    if let Some(gen_cfg) = &data.gen_config {
        let schedule = gen_cfg.build_schedule()?;
        let env = gen_cfg.env()?;
        let regret = expected_regret(
            &theta,
            &schedule,
            params.tau,
            &theta_ref,
            &env,
            cfg.n_contexts,
            cfg.seed,
        )?;
        records.push(MetricRecord {
            run_id: cfg.run_id.clone(),
            metric: "expected_regret".into(),
            value: regret.value,
            std_error: Some(regret.std_error),
        });
    }

    std::fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&records)?,
    )?;
    config::write_manifest(out, "eval", &cfg)?;
    for rec in &records {
        match rec.std_error {
            Some(se) => println!("eval[{}]: {} = {:.6} ± {:.6}", rec.run_id, rec.metric, rec.value, se),
            None => println!("eval[{}]: {} = {:.6}", rec.run_id, rec.metric, rec.value),
        }
    }
    Ok(())
}
