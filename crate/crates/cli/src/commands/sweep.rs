//! `nsdpo sweep`: Cartesian sweep over objective hyperparameters and seeds,
//! with per-step aggregation across seeds.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Result};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gen::generate;
use super::train::{run_cell, TrainCmdConfig};
use super::GenConfig;
use crate::config;

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated objectives to sweep (dpo,nsdpo,swdpo).
    #[arg(long, value_delimiter = ',')]
    pub objectives: Option<Vec<String>>,
    /// Discount grid for nsdpo.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Window grid for swdpo.
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<u32>>,
    /// Seeds; each seed draws its own dataset.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub steps: Option<u32>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<u32>,
    /// Synthetic schedule: drift | stationary.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub points_per_step: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub gen: GenConfig,
    pub objectives: Vec<String>,
    pub gammas: Vec<f64>,
    pub windows: Vec<u32>,
    pub seeds: Vec<u64>,
    pub steps: u32,
    pub learning_rate: f64,
    pub eval_every: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let train = TrainCmdConfig::default();
        Self {
            gen: GenConfig::default(),
            objectives: vec!["dpo".into(), "nsdpo".into(), "swdpo".into()],
            gammas: vec![0.7, 0.9],
            windows: vec![33, 50],
            seeds: (0..10).collect(),
            steps: train.steps,
            learning_rate: train.learning_rate,
            eval_every: train.eval_every,
        }
    }
}

impl SweepArgs {
    pub fn resolve(&self, config_file: Option<&Path>, seed: Option<u64>) -> Result<SweepConfig> {
        let mut cfg = SweepConfig::default();
        if let Some(path) = config_file {
            cfg = config::overlay_config(&cfg, path)?;
        }
        if let Some(v) = &self.objectives {
            cfg.objectives = v.clone();
        }
        if let Some(v) = &self.gammas {
            cfg.gammas = v.clone();
        }
        if let Some(v) = &self.windows {
            cfg.windows = v.clone();
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if let Some(v) = &self.schedule {
            cfg.gen.schedule = v.clone();
        }
        if let Some(v) = self.points_per_step {
            cfg.gen.points_per_step = v;
        }
        // A global seed offsets the whole seed list, keeping cells distinct.
        if let Some(v) = seed {
            cfg.seeds = cfg.seeds.iter().map(|s| s + v).collect();
        }
        Ok(cfg)
    }
}

/// One sweep cell: an objective configuration on one seed's dataset.
#[derive(Debug, Clone, Serialize, PartialEq, PartialOrd)]
struct CellKey {
    objective: String,
    gamma: Option<f64>,
    window: Option<u32>,
    seed: u64,
}

impl CellKey {
    fn label(&self) -> String {
        let mut s = self.objective.clone();
        if let Some(g) = self.gamma {
            s.push_str(&format!("-g{g}"));
        }
        if let Some(w) = self.window {
            s.push_str(&format!("-w{w}"));
        }
        format!("{s}-seed{}", self.seed)
    }

    /// Aggregation key: every field except the seed.
    fn group(&self) -> (String, Option<u64>, Option<u32>) {
        (self.objective.clone(), self.gamma.map(f64::to_bits), self.window)
    }
}

fn enumerate_cells(cfg: &SweepConfig) -> Result<Vec<CellKey>> {
    let mut cells = Vec::new();
    for objective in &cfg.objectives {
        match objective.as_str() {
            "dpo" => {
                for &seed in &cfg.seeds {
                    cells.push(CellKey {
                        objective: objective.clone(),
                        gamma: None,
                        window: None,
                        seed,
                    });
                }
            }
            "nsdpo" => {
                for &gamma in &cfg.gammas {
                    for &seed in &cfg.seeds {
                        cells.push(CellKey {
                            objective: objective.clone(),
                            gamma: Some(gamma),
                            window: None,
                            seed,
                        });
                    }
                }
            }
            "swdpo" => {
                for &window in &cfg.windows {
                    for &seed in &cfg.seeds {
                        cells.push(CellKey {
                            objective: objective.clone(),
                            gamma: None,
                            window: Some(window),
                            seed,
                        });
                    }
                }
            }
            other => bail!("unknown objective '{other}' in sweep"),
        }
    }
    Ok(cells)
}

struct CellResult {
    key: CellKey,
    curve: Vec<(u32, f64, f64)>, // step, accuracy, loss
    final_accuracy: f64,
}

fn run_one(cfg: &SweepConfig, key: &CellKey) -> Result<CellResult> {
    let mut gen_cfg = cfg.gen.clone();
    gen_cfg.seed = key.seed;
    let (header, dataset, test_set) = generate(&gen_cfg)?;
    let train_cfg = TrainCmdConfig {
        objective: key.objective.clone(),
        gamma: key.gamma.unwrap_or(1.0),
        window: key.window,
        learning_rate: cfg.learning_rate,
        steps: cfg.steps,
        eval_every: cfg.eval_every,
        seed: key.seed,
        ..Default::default()
    };
    let outcome = run_cell(&train_cfg, &dataset, &test_set, header.tau)?;
    let curve = outcome
        .trace
        .records
        .iter()
        .map(|r| (r.step, r.reward_accuracy.unwrap_or(f64::NAN), r.loss))
        .collect();
    Ok(CellResult {
        key: key.clone(),
        curve,
        final_accuracy: outcome.final_accuracy,
    })
}

#[derive(Serialize)]
struct FailureRecord {
    cell: String,
    error: String,
}

pub fn run(
    args: &SweepArgs,
    config_file: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    jobs: Option<usize>,
) -> Result<()> {
    let cfg = args.resolve(config_file, seed)?;
    config::ensure_out_dir(out)?;
    let cells = enumerate_cells(&cfg)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()?;
    let outcomes: Vec<(CellKey, Result<CellResult>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|key| (key.clone(), run_one(&cfg, key)))
            .collect()
    });

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (key, outcome) in outcomes {
        match outcome {
            Ok(res) => results.push(res),
            Err(err) => failures.push(FailureRecord {
                cell: key.label(),
                error: format!("{err:#}"),
            }),
        }
    }

    // Per-cell finals.
    results.sort_by(|a, b| a.key.partial_cmp(&b.key).expect("keys are orderable"));
    let mut cells_csv = csv::Writer::from_path(out.join("cells.csv"))?;
    cells_csv.write_record(["objective", "gamma", "window", "seed", "final_accuracy"])?;
    for r in &results {
        cells_csv.write_record([
            r.key.objective.clone(),
            r.key.gamma.map(|g| g.to_string()).unwrap_or_default(),
            r.key.window.map(|w| w.to_string()).unwrap_or_default(),
            r.key.seed.to_string(),
            r.final_accuracy.to_string(),
        ])?;
    }
    cells_csv.flush()?;

    // Mean +/- std per configuration and step, across seeds.
    let mut groups: BTreeMap<(String, Option<u64>, Option<u32>), Vec<&CellResult>> =
        BTreeMap::new();
    for r in &results {
        groups.entry(r.key.group()).or_default().push(r);
    }
    let mut agg = csv::Writer::from_path(out.join("aggregated.csv"))?;
    agg.write_record([
        "objective",
        "gamma",
        "window",
        "step",
        "accuracy_mean",
        "accuracy_std",
        "loss_mean",
        "loss_std",
        "n_seeds",
    ])?;
    for ((objective, gamma_bits, window), members) in &groups {
        let gamma = gamma_bits.map(f64::from_bits);
        let n_checkpoints = members.iter().map(|m| m.curve.len()).min().unwrap_or(0);
        for i in 0..n_checkpoints {
            let step = members[0].curve[i].0;
            let accs: Vec<f64> = members.iter().map(|m| m.curve[i].1).collect();
            let losses: Vec<f64> = members.iter().map(|m| m.curve[i].2).collect();
            let stats = |xs: &[f64]| {
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let var = if xs.len() > 1 {
                    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64
                } else {
                    0.0
                };
                (mean, var.sqrt())
            };
            let (acc_mean, acc_std) = stats(&accs);
            let (loss_mean, loss_std) = stats(&losses);
            agg.write_record([
                objective.clone(),
                gamma.map(|g| g.to_string()).unwrap_or_default(),
                window.map(|w| w.to_string()).unwrap_or_default(),
                step.to_string(),
                acc_mean.to_string(),
                acc_std.to_string(),
                loss_mean.to_string(),
                loss_std.to_string(),
                members.len().to_string(),
            ])?;
        }
    }
    agg.flush()?;
    config::write_manifest(out, "sweep", &cfg)?;

    if !failures.is_empty() {
        std::fs::write(
            out.join("failures.json"),
            serde_json::to_string_pretty(&failures)?,
        )?;
        bail!(
            "{} of {} sweep cells failed; see {}",
            failures.len(),
            cells.len(),
            out.join("failures.json").display()
        );
    }
    println!(
        "sweep: {} cells aggregated into {}",
        cells.len(),
        out.join("aggregated.csv").display()
    );
    Ok(())
}
