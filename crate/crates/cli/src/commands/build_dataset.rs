//! `nsdpo build-dataset`: turn a tabular two-source preference table into a
//! drifting preference dataset using one of the named recipes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;
use nsdpo_core::dataset_tools::{
    changepoint_assignment, gradual_interpolation, min_divergence_filter, split_train_test,
    test_assignment, write_timed_rows_file, BuildManifest, PreferenceTable,
};
use serde::{Deserialize, Serialize};

use crate::config;

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Recipe preset: nsgo-gradual | ufb-changepoint | tvhh-gradual |
    /// tvhh-changepoint.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Input preference table (CSV).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, short = 'T')]
    pub horizon: Option<u32>,
    /// Changepoint step (changepoint recipes).
    #[arg(long)]
    pub tcp: Option<u32>,
    /// Target fraction of rows whose sources disagree (changepoint recipes).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Blend window start (gradual recipes).
    #[arg(long)]
    pub t_start: Option<u32>,
    /// Blend window end (gradual recipes).
    #[arg(long)]
    pub t_end: Option<u32>,
    /// Minimum source divergence filter (gradual opinion recipe).
    #[arg(long)]
    pub min_divergence: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Keep train/test prompts disjoint.
    #[arg(long)]
    pub disjoint_prompts: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildDatasetConfig {
    pub recipe: String,
    pub input: PathBuf,
    #[serde(rename = "T")]
    pub horizon: u32,
    pub t_cp: u32,
    pub rho_diff: f64,
    pub t_start: u32,
    pub t_end: u32,
    pub min_divergence: Option<f64>,
    pub test_fraction: f64,
    pub disjoint_prompts: bool,
    pub seed: u64,
}

impl Default for BuildDatasetConfig {
    fn default() -> Self {
        Self {
            recipe: "ufb-changepoint".into(),
            input: PathBuf::from("table.csv"),
            horizon: 101,
            t_cp: 66,
            rho_diff: 0.9,
            t_start: 33,
            t_end: 66,
            min_divergence: None,
            test_fraction: 0.1,
            disjoint_prompts: false,
            seed: 0,
        }
    }
}

impl BuildDatasetArgs {
    pub fn resolve(
        &self,
        config_file: Option<&Path>,
        seed: Option<u64>,
    ) -> Result<BuildDatasetConfig> {
        let mut cfg = BuildDatasetConfig::default();
        if let Some(path) = config_file {
            cfg = config::overlay_config(&cfg, path)?;
        }
        if let Some(v) = &self.recipe {
            cfg.recipe = v.clone();
        }
        if let Some(v) = &self.input {
            cfg.input = v.clone();
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.tcp {
            cfg.t_cp = v;
        }
        if let Some(v) = self.rho {
            cfg.rho_diff = v;
        }
        if let Some(v) = self.t_start {
            cfg.t_start = v;
        }
        if let Some(v) = self.t_end {
            cfg.t_end = v;
        }
        if let Some(v) = self.min_divergence {
            cfg.min_divergence = Some(v);
        }
        if let Some(v) = self.test_fraction {
            cfg.test_fraction = v;
        }
        if self.disjoint_prompts {
            cfg.disjoint_prompts = true;
        }
        if let Some(v) = seed {
            cfg.seed = v;
        }
        // Preset-specific defaults.
        if cfg.recipe == "nsgo-gradual" && cfg.min_divergence.is_none() {
            cfg.min_divergence = Some(0.2);
        }
        Ok(cfg)
    }
}

pub fn run(
    args: &BuildDatasetArgs,
    config_file: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let cfg = args.resolve(config_file, seed)?;
    config::ensure_out_dir(out)?;
    let mut table = PreferenceTable::read_csv_file(&cfg.input)?;
    if let Some(threshold) = cfg.min_divergence {
        table = min_divergence_filter(&table, threshold);
    }
    let (train_table, test_table) =
        split_train_test(&table, cfg.test_fraction, cfg.disjoint_prompts, cfg.seed)?;

    let train_rows = match cfg.recipe.as_str() {
        "nsgo-gradual" | "tvhh-gradual" => {
            gradual_interpolation(&train_table, cfg.horizon, cfg.t_start, cfg.t_end, cfg.seed)?
        }
        "ufb-changepoint" | "tvhh-changepoint" => {
            changepoint_assignment(&train_table, cfg.horizon, cfg.t_cp, cfg.rho_diff, cfg.seed)?
        }
        other => bail!(
            "unknown recipe '{other}'; expected nsgo-gradual, ufb-changepoint, \
             tvhh-gradual or tvhh-changepoint"
        ),
    };
    let test_rows = test_assignment(&test_table, cfg.horizon);

    write_timed_rows_file(&out.join("train.jsonl"), &train_rows)?;
    write_timed_rows_file(&out.join("test.jsonl"), &test_rows)?;

    let is_changepoint = cfg.recipe.contains("changepoint");
    let build_manifest = BuildManifest {
        recipe: cfg.recipe.clone(),
        horizon: cfg.horizon,
        t_cp: is_changepoint.then_some(cfg.t_cp),
        t_start: (!is_changepoint).then_some(cfg.t_start),
        t_end: (!is_changepoint).then_some(cfg.t_end),
        rho_diff: is_changepoint.then_some(cfg.rho_diff),
        min_divergence: cfg.min_divergence,
        seed: cfg.seed,
        train_rows: train_rows.len(),
        test_rows: test_rows.len(),
    };
    std::fs::write(
        out.join("build.json"),
        serde_json::to_string_pretty(&build_manifest)?,
    )?;
    config::write_manifest(out, "build-dataset", &cfg)?;
    println!(
        "build-dataset[{}]: {} train rows, {} test rows",
        cfg.recipe,
        train_rows.len(),
        test_rows.len()
    );
    Ok(())
}
