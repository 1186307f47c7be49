//! `nsdpo train`: fit one objective on a generated dataset and emit the
//! training trace, final parameters and evaluation metrics.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use nalgebra::DVector;
use nsdpo_core::metrics::{reward_accuracy, MetricRecord};
use nsdpo_core::objectives::{build_objective, ObjectiveConfig, PreparedDataset};
use nsdpo_core::optimizer::{train, TrainConfig, TrainTrace};
use serde::{Deserialize, Serialize};

use super::{load_run_data, ParamsFile};
use crate::config;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding train.jsonl / test.jsonl (from `gen`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Objective strategy: dpo | nsdpo | swdpo.
    #[arg(long)]
    pub objective: Option<String>,
    /// Discount factor (nsdpo).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Sliding-window size (swdpo).
    #[arg(long)]
    pub window: Option<u32>,
    /// Ridge coefficient.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Sigmoid curvature floor used by the ridge term.
    #[arg(long)]
    pub c_sigma: Option<f64>,
    /// KL coefficient; defaults to the dataset header value.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub steps: Option<u32>,
    #[arg(long)]
    pub eval_every: Option<u32>,
    /// Disable gradient normalization.
    #[arg(long)]
    pub no_normalize: bool,
    /// Record θ at every checkpoint.
    #[arg(long)]
    pub snapshot_theta: bool,
    /// Identifier used in metric records; defaults to the objective name.
    #[arg(long)]
    pub run_id: Option<String>,
}

/// Fully resolved training-run config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainCmdConfig {
    pub data: PathBuf,
    pub objective: String,
    pub gamma: f64,
    pub window: Option<u32>,
    pub lambda: f64,
    pub c_sigma: f64,
    /// `None` means "use the dataset header's tau".
    pub tau: Option<f64>,
    pub learning_rate: f64,
    pub steps: u32,
    pub eval_every: u32,
    pub normalize_gradient: bool,
    pub snapshot_theta: bool,
    pub run_id: Option<String>,
    pub seed: u64,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let train_defaults = TrainConfig::default();
        let obj_defaults = ObjectiveConfig::default();
        Self {
            data: PathBuf::from("."),
            objective: "nsdpo".into(),
            gamma: obj_defaults.gamma,
            window: None,
            lambda: obj_defaults.lambda,
            c_sigma: obj_defaults.c_sigma,
            tau: None,
            learning_rate: train_defaults.learning_rate,
            steps: train_defaults.steps,
            eval_every: train_defaults.eval_every,
            normalize_gradient: train_defaults.normalize_gradient,
            snapshot_theta: false,
            run_id: None,
            seed: train_defaults.seed,
        }
    }
}

impl TrainArgs {
    pub fn resolve(&self, config_file: Option<&Path>, seed: Option<u64>) -> Result<TrainCmdConfig> {
        let mut cfg = TrainCmdConfig::default();
        if let Some(path) = config_file {
            cfg = config::overlay_config(&cfg, path)?;
        }
        if let Some(v) = &self.data {
            cfg.data = v.clone();
        }
        if let Some(v) = &self.objective {
            cfg.objective = v.clone();
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.window {
            cfg.window = Some(v);
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.c_sigma {
            cfg.c_sigma = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = Some(v);
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if self.no_normalize {
            cfg.normalize_gradient = false;
        }
        if self.snapshot_theta {
            cfg.snapshot_theta = true;
        }
        if let Some(v) = &self.run_id {
            cfg.run_id = Some(v.clone());
        }
        if let Some(v) = seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

/// Outcome of a single training run, reused by `sweep`.
pub struct TrainOutcome {
    pub theta: DVector<f64>,
    pub trace: TrainTrace,
    pub final_accuracy: f64,
    pub tau: f64,
}

/// Trains one cell on already-loaded data.
pub fn run_cell(
    cfg: &TrainCmdConfig,
    dataset: &nsdpo_core::env::OfflineDataset,
    test_set: &[nsdpo_core::env::TestPair],
    header_tau: f64,
) -> Result<TrainOutcome> {
    let tau = cfg.tau.unwrap_or(header_tau);
    let obj_cfg = ObjectiveConfig {
        tau,
        gamma: cfg.gamma,
        lambda: cfg.lambda,
        window: cfg.window,
        c_sigma: cfg.c_sigma,
    };
    let objective = build_objective(&cfg.objective, obj_cfg)?;
    let data = PreparedDataset::from_dataset(dataset, None)?;
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        steps: cfg.steps,
        normalize_gradient: cfg.normalize_gradient,
        init_theta: None,
        eval_every: cfg.eval_every,
        seed: cfg.seed,
        snapshot_theta: cfg.snapshot_theta,
    };
    let theta_ref = data.theta_ref().clone();
    let mut eval = |theta: &DVector<f64>| reward_accuracy(theta, &theta_ref, test_set, tau);
    let (theta, trace) = train(objective.as_ref(), &data, &train_cfg, Some(&mut eval))?;
    let final_accuracy = reward_accuracy(&theta, &theta_ref, test_set, tau);
    Ok(TrainOutcome {
        theta,
        trace,
        final_accuracy,
        tau,
    })
}

pub fn run(args: &TrainArgs, config_file: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = args.resolve(config_file, seed)?;
    config::ensure_out_dir(out)?;
    let data = load_run_data(&cfg.data)?;
    let outcome = run_cell(&cfg, &data.dataset, &data.test_set, data.header.tau)
        .with_context(|| format!("training objective '{}'", cfg.objective))?;

    let trace_path = out.join("trace.csv");
    let file = std::fs::File::create(&trace_path)?;
    outcome.trace.write_csv(file)?;
    if cfg.snapshot_theta {
        #[derive(Serialize)]
        struct Snapshot<'a> {
            step: u32,
            theta: &'a [f64],
        }
        let snapshots: Vec<Snapshot> = outcome
            .trace
            .records
            .iter()
            .filter_map(|r| {
                r.theta.as_deref().map(|theta| Snapshot {
                    step: r.step,
                    theta,
                })
            })
            .collect();
        std::fs::write(
            out.join("theta_snapshots.json"),
            serde_json::to_string_pretty(&snapshots)?,
        )?;
    }

    ParamsFile {
        theta: outcome.theta.iter().cloned().collect(),
        tau: outcome.tau,
        objective: cfg.objective.clone(),
    }
    .write(&out.join("params.json"))?;

    let run_id = cfg
        .run_id
        .clone()
        .unwrap_or_else(|| cfg.objective.clone());
    let records = vec![MetricRecord {
        run_id: run_id.clone(),
        metric: "reward_accuracy".into(),
        value: outcome.final_accuracy,
        std_error: None,
    }];
    std::fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&records)?,
    )?;
    config::write_manifest(out, "train", &cfg)?;
    println!(
        "train[{run_id}]: final reward accuracy {:.4} after {} steps",
        outcome.final_accuracy, cfg.steps
    );
    Ok(())
}
