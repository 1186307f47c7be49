//! `nsdpo bound-study`: grid over dataset sizes relating the empirical
//! estimation error and its learning/tracking decomposition to the bound
//! terms, emitting rows for log-log regression of error against n.

use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use nsdpo_core::env::PolicyParams;
use nsdpo_core::metrics::{condition_number_kappa, estimation_error};
use nsdpo_core::numeric::linear_fit;
use nsdpo_core::objectives::{ObjectiveConfig, PreparedDataset};
use nsdpo_core::optimizer::{project_params, train, ProjectionSettings, TrainConfig};
use nsdpo_core::theory::{
    error_decomposition, estimation_bound_rhs, nonlinearity_coeffs, DecompositionConfig,
    TheoryConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gen::generate;
use super::GenConfig;
use crate::config;

#[derive(Debug, Args)]
pub struct BoundStudyArgs {
    /// Dataset sizes via points per step (n = pps·(T-1)).
    #[arg(long, value_delimiter = ',')]
    pub points_per_step_grid: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Ridge/norm coefficient; near-zero isolates the sampling rate.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Synthetic schedule: drift | stationary.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub steps: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundStudyConfig {
    pub gen: GenConfig,
    pub points_per_step_grid: Vec<u32>,
    pub seeds: Vec<u64>,
    pub gamma: f64,
    pub lambda: f64,
    pub delta: f64,
    pub steps: u32,
    pub learning_rate: f64,
    /// Monte-Carlo sample size for the condition-number estimate.
    pub kappa_mc: usize,
}

impl Default for BoundStudyConfig {
    fn default() -> Self {
        Self {
            gen: GenConfig {
                schedule: "stationary".into(),
                n_test: 10,
                ..Default::default()
            },
            points_per_step_grid: vec![5, 20, 80],
            seeds: (0..20).collect(),
            gamma: 0.9,
            lambda: 1e-10,
            delta: 0.1,
            steps: 1000,
            learning_rate: 0.1,
            kappa_mc: 50_000,
        }
    }
}

impl BoundStudyArgs {
    pub fn resolve(
        &self,
        config_file: Option<&Path>,
        seed: Option<u64>,
    ) -> Result<BoundStudyConfig> {
        let mut cfg = BoundStudyConfig::default();
        if let Some(path) = config_file {
            cfg = config::overlay_config(&cfg, path)?;
        }
        if let Some(v) = &self.points_per_step_grid {
            cfg.points_per_step_grid = v.clone();
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = &self.schedule {
            cfg.gen.schedule = v.clone();
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = seed {
            cfg.seeds = cfg.seeds.iter().map(|s| s + v).collect();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct StudyRow {
    n: usize,
    #[serde(rename = "T")]
    horizon: u32,
    gamma: f64,
    b_t: f64,
    seed: u64,
    xi_learn: f64,
    xi_track: f64,
    bound_rhs: f64,
    empirical_error: f64,
    /// empirical_error / bound_rhs; absolute comparison is not meaningful
    /// because the bound's universal constants are unknown.
    ratio: f64,
}

fn run_one(cfg: &BoundStudyConfig, pps: u32, seed: u64, kappa: f64) -> Result<StudyRow> {
    let mut gen_cfg = cfg.gen.clone();
    gen_cfg.points_per_step = pps;
    gen_cfg.seed = seed;
    let schedule = gen_cfg.build_schedule()?;
    let env = gen_cfg.env()?;
    let (_, dataset, _) = generate(&gen_cfg)?;
    let data = PreparedDataset::from_dataset(&dataset, None)?;

    let radius = schedule.max_param_norm();
    let coeffs = nonlinearity_coeffs(
        gen_cfg.tau,
        nsdpo_core::env::feature_norm_bound(env.d_x, env.n_actions),
        radius,
    );
    let obj_cfg = ObjectiveConfig {
        tau: gen_cfg.tau,
        gamma: cfg.gamma,
        lambda: cfg.lambda,
        window: None,
        c_sigma: coeffs.c_sigma,
    };
    let objective = nsdpo_core::objectives::NsDpo::new(obj_cfg.clone())?;
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        steps: cfg.steps,
        seed,
        ..Default::default()
    };
    let (theta_hat, _) = train(&objective, &data, &train_cfg, None)?;
    let projected = project_params(
        &PolicyParams::new(theta_hat, radius),
        &data,
        &obj_cfg,
        cfg.lambda.max(1e-10),
        &ProjectionSettings::default(),
    )?;
    let theta_tilde = projected.params.theta;

    let theta_star = schedule.param_at_step(schedule.horizon())?;
    let empirical_error =
        estimation_error(&theta_tilde, &theta_star, &data, cfg.gamma, cfg.lambda)?;
    let decomposition = error_decomposition(
        &schedule,
        &data,
        &DecompositionConfig {
            gamma: cfg.gamma,
            lambda: cfg.lambda,
            tau: gen_cfg.tau,
            c_sigma: coeffs.c_sigma,
            noiseless_labels: false,
        },
    )?;
    let theory = TheoryConfig::for_synthetic(
        &schedule,
        &dataset,
        &env,
        gen_cfg.tau,
        cfg.lambda,
        cfg.delta,
        kappa,
    )?;
    let bound = estimation_bound_rhs(&theory, cfg.gamma)?;
    Ok(StudyRow {
        n: dataset.len(),
        horizon: schedule.horizon(),
        gamma: cfg.gamma,
        b_t: theory.variation_budget,
        seed,
        xi_learn: decomposition.learning,
        xi_track: decomposition.tracking,
        bound_rhs: bound.regret_bound,
        empirical_error,
        ratio: empirical_error / bound.regret_bound,
    })
}

#[derive(Serialize)]
struct StudySummary {
    xi_learn_slope: f64,
    empirical_error_slope: f64,
    kappa: f64,
    rows: usize,
}

pub fn run(
    args: &BoundStudyArgs,
    config_file: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    jobs: Option<usize>,
) -> Result<()> {
    let cfg = args.resolve(config_file, seed)?;
    config::ensure_out_dir(out)?;

    // One condition-number estimate serves the whole grid: the schedule's
    // final parameter against the uniform reference.
    let schedule = cfg.gen.build_schedule()?;
    let env = cfg.gen.env()?;
    let theta_star = schedule.param_at_step(schedule.horizon())?;
    let kappa_est = condition_number_kappa(
        &env,
        &theta_star,
        &nalgebra::DVector::zeros(env.feature_dim()),
        cfg.kappa_mc,
        cfg.seeds.first().copied().unwrap_or(0),
    )
    .context("estimating the coverage condition number")?;

    let mut cells = Vec::new();
    for &pps in &cfg.points_per_step_grid {
        for &s in &cfg.seeds {
            cells.push((pps, s));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()?;
    let rows: Vec<Result<StudyRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(pps, s)| run_one(&cfg, pps, s, kappa_est.kappa))
            .collect()
    });
    let rows: Vec<StudyRow> = rows.into_iter().collect::<Result<_>>()?;

    let mut writer = csv::Writer::from_path(out.join("bound_study.csv"))?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;

    let slope_of = |values: &dyn Fn(&StudyRow) -> f64| {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| values(r) > 0.0)
            .map(|r| ((r.n as f64).ln(), values(r).ln()))
            .collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        linear_fit(&xs, &ys).0
    };
    let summary = StudySummary {
        xi_learn_slope: slope_of(&|r| r.xi_learn),
        empirical_error_slope: slope_of(&|r| r.empirical_error),
        kappa: kappa_est.kappa,
        rows: rows.len(),
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    config::write_manifest(out, "bound-study", &cfg)?;
    println!(
        "bound-study: {} rows; log-log slope of the learning term vs n = {:.3}",
        rows.len(),
        summary.xi_learn_slope
    );
    Ok(())
}
