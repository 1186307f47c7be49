//! Deterministic full-batch gradient descent with optional gradient
//! normalization, plus projection of the trained parameter onto the
//! admissible ball.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::PolicyParams;

/// Checkpoint evaluation hook: scores θ (e.g. reward accuracy on a held-out
/// test set).
pub type EvalHook<'a> = &'a mut dyn FnMut(&DVector<f64>) -> f64;
use crate::numeric::{cholesky, inverse_quadratic_norm};
use crate::objectives::{g_tau, Objective, ObjectiveConfig, ObjectiveError, PreparedDataset};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("objective failed: {0}")]
    Objective(#[from] ObjectiveError),
    #[error("non-finite {what} at step {step}; aborting")]
    NonFinite { what: &'static str, step: u32 },
    #[error("projection norm matrix is singular; lambda must be positive")]
    SingularNormMatrix,
}

/// Training hyperparameters. Defaults: 1000 normalized-gradient steps of
/// size 0.1 from the zero initializer, evaluating every 10 steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: u32,
    pub normalize_gradient: bool,
    /// Initial parameter; `None` starts from zeros (the reference policy),
    /// which pins the initial loss to exactly log 2 when λ = 0.
    pub init_theta: Option<Vec<f64>>,
    pub eval_every: u32,
    /// Recorded for provenance; full-batch training itself is deterministic.
    pub seed: u64,
    /// Keep a copy of θ in each checkpoint record.
    pub snapshot_theta: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            steps: 1000,
            normalize_gradient: true,
            init_theta: None,
            eval_every: 10,
            seed: 0,
            snapshot_theta: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.learning_rate > 0.0) {
            return Err(OptimError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.steps < 1 {
            return Err(OptimError::InvalidConfig("steps must be >= 1".into()));
        }
        if self.eval_every < 1 {
            return Err(OptimError::InvalidConfig("eval_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// One checkpoint of the training trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u32,
    pub loss: f64,
    pub grad_norm: f64,
    pub reward_accuracy: Option<f64>,
    pub theta: Option<Vec<f64>>,
}

/// Checkpoints with strictly increasing step numbers.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Writes the trace as CSV with columns `step,loss,grad_norm,reward_accuracy`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["step", "loss", "grad_norm", "reward_accuracy"])?;
        for r in &self.records {
            let acc = r
                .reward_accuracy
                .map(|a| a.to_string())
                .unwrap_or_default();
            wtr.write_record([
                r.step.to_string(),
                r.loss.to_string(),
                r.grad_norm.to_string(),
                acc,
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Runs full-batch descent: `θ <- θ - η·g/||g||` when normalizing (a zero
/// gradient leaves θ unchanged), otherwise `θ <- θ - η·g`. The evaluation
/// callback, when given, scores θ at every checkpoint.
pub fn train(
    objective: &dyn Objective,
    data: &PreparedDataset,
    cfg: &TrainConfig,
    mut evaluate: Option<EvalHook>,
) -> Result<(DVector<f64>, TrainTrace), OptimError> {
    cfg.validate()?;
    let mut theta = match &cfg.init_theta {
        Some(v) => DVector::from_vec(v.clone()),
        None => DVector::zeros(data.dim()),
    };
    let mut trace = TrainTrace::default();

    let checkpoint = |step: u32,
                          theta: &DVector<f64>,
                          trace: &mut TrainTrace,
                          evaluate: &mut Option<&mut dyn FnMut(&DVector<f64>) -> f64>|
     -> Result<(), OptimError> {
        let loss = objective.loss(theta, data)?.value;
        let grad_norm = objective.grad(theta, data)?.norm();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(OptimError::NonFinite {
                what: "checkpoint",
                step,
            });
        }
        trace.records.push(TraceRecord {
            step,
            loss,
            grad_norm,
            reward_accuracy: evaluate.as_mut().map(|f| f(theta)),
            theta: cfg.snapshot_theta.then(|| theta.iter().cloned().collect()),
        });
        Ok(())
    };

    checkpoint(0, &theta, &mut trace, &mut evaluate)?;
    for step in 1..=cfg.steps {
        let grad = objective.grad(&theta, data)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(OptimError::NonFinite {
                what: "gradient",
                step,
            });
        }
        let norm = grad.norm();
        if cfg.normalize_gradient {
            if norm > 0.0 {
                theta.axpy(-cfg.learning_rate / norm, &grad, 1.0);
            }
        } else {
            theta.axpy(-cfg.learning_rate, &grad, 1.0);
        }
        if step % cfg.eval_every == 0 || step == cfg.steps {
            checkpoint(step, &theta, &mut trace, &mut evaluate)?;
        }
    }
    Ok((theta, trace))
}

/// Result of projecting a trained parameter onto the admissible ball.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionOutcome {
    pub params: PolicyParams,
    pub converged: bool,
    pub iterations: u32,
    /// Final value of the projection objective
    /// `||g(θ̂) - g(θ)||_{(Σ̂ + λI)^{-1}}`.
    pub objective: f64,
}

/// Settings of the projection solver: projected gradient descent with
/// backtracking on the squared projection objective.
#[derive(Debug, Clone)]
pub struct ProjectionSettings {
    pub max_iters: u32,
    /// Stop when an accepted step decreases the objective by less than this.
    pub tol: f64,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
        }
    }
}

/// Projects `theta_hat` onto the ball of radius `theta_hat.radius_w` by
/// minimizing `||g(θ̂) - g(θ)||_{(Σ̂ + λI)^{-1}}` over the ball, where `g` is
/// the discounted gradient map of [`g_tau`] and `Σ̂` the discounted
/// covariance of the data. Returns `theta_hat` unchanged when it is already
/// admissible. `norm_lambda` must be positive so the norm matrix inverts.
pub fn project_params(
    theta_hat: &PolicyParams,
    data: &PreparedDataset,
    obj_cfg: &ObjectiveConfig,
    norm_lambda: f64,
    settings: &ProjectionSettings,
) -> Result<ProjectionOutcome, OptimError> {
    if theta_hat.is_admissible() {
        return Ok(ProjectionOutcome {
            params: theta_hat.clone(),
            converged: true,
            iterations: 0,
            objective: 0.0,
        });
    }
    if !(norm_lambda > 0.0) {
        return Err(OptimError::SingularNormMatrix);
    }
    let radius = theta_hat.radius_w;
    let cov = crate::metrics::sigma_hat(data, obj_cfg.gamma)
        .map_err(|_| OptimError::Objective(ObjectiveError::EmptyDataset))?;
    let mut norm_matrix = cov.matrix;
    for i in 0..data.dim() {
        norm_matrix[(i, i)] += norm_lambda;
    }
    let chol = cholesky(&norm_matrix).ok_or(OptimError::SingularNormMatrix)?;

    let target = g_tau(&theta_hat.theta, data, obj_cfg)?;
    // Squared objective f(θ) = r' M^{-1} r with r = g(θ̂) - g(θ); the
    // gradient is -2·J_g(θ)·M^{-1}·r with J_g the (symmetric) Jacobian.
    let objective_value = |theta: &DVector<f64>| -> Result<f64, OptimError> {
        let r = &target - g_tau(theta, data, obj_cfg)?;
        Ok(r.dot(&chol.solve(&r)))
    };
    let project = |theta: &DVector<f64>| -> DVector<f64> {
        let n = theta.norm();
        if n <= radius {
            theta.clone()
        } else {
            theta * (radius / n)
        }
    };

    // Radial shrink is feasible and a natural starting candidate.
    let mut theta = project(&theta_hat.theta);
    let mut value = objective_value(&theta)?;
    // The Jacobian of g_tau equals the discounted loss Hessian, which the
    // nsdpo strategy exposes.
    let helper = crate::objectives::NsDpo::new(obj_cfg.clone())?;

    let mut converged = false;
    let mut iterations = 0;
    let mut step_size = 1.0;
    for _ in 0..settings.max_iters {
        iterations += 1;
        let r = &target - g_tau(&theta, data, obj_cfg)?;
        let jac = crate::objectives::Objective::hessian(&helper, &theta, data)?;
        let grad = -2.0 * (&jac * chol.solve(&r));

        // Backtracking on the projected step.
        let mut accepted = false;
        let mut s = step_size;
        for _ in 0..60 {
            let candidate = project(&(&theta - s * &grad));
            let cand_value = objective_value(&candidate)?;
            if cand_value < value {
                let decrease = value - cand_value;
                theta = candidate;
                value = cand_value;
                accepted = true;
                step_size = (s * 2.0).min(1e6);
                if decrease < settings.tol {
                    converged = true;
                }
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            // No descent direction at this resolution: stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }

    Ok(ProjectionOutcome {
        params: PolicyParams::new(theta, radius),
        converged,
        iterations,
        objective: value.max(0.0).sqrt(),
    })
}

/// Weighted-norm distance between the gradient maps of two parameters,
/// `||g(a) - g(b)||_{(Σ̂ + λI)^{-1}}`; diagnostic used to compare projection
/// candidates.
pub fn g_tau_distance(
    theta_a: &DVector<f64>,
    theta_b: &DVector<f64>,
    data: &PreparedDataset,
    obj_cfg: &ObjectiveConfig,
    norm_lambda: f64,
) -> Result<f64, OptimError> {
    let cov = crate::metrics::sigma_hat(data, obj_cfg.gamma)
        .map_err(|_| OptimError::Objective(ObjectiveError::EmptyDataset))?;
    let mut m = cov.matrix;
    for i in 0..data.dim() {
        m[(i, i)] += norm_lambda;
    }
    let r = g_tau(theta_a, data, obj_cfg)? - g_tau(theta_b, data, obj_cfg)?;
    inverse_quadratic_norm(&r, &m).ok_or(OptimError::SingularNormMatrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        sample_dataset, sample_test_set, DriftSchedule, EnvConfig, SampleConfig,
    };
    use crate::metrics::reward_accuracy;
    use crate::objectives::{build_objective, Dpo, LossReport, NsDpo};
    use nalgebra::DVector;

    fn stationary_problem(seed: u64) -> (PreparedDataset, Vec<crate::env::TestPair>) {
        let d_x = 2;
        let mut theta = DVector::zeros(2 * d_x);
        for k in 0..d_x {
            theta[2 * k] = 1.0;
        }
        let sched = DriftSchedule::constant(theta, 101).unwrap();
        let cfg = SampleConfig::new(EnvConfig::new(d_x, 4).unwrap(), 1.0, 20, 200, seed);
        let dataset = sample_dataset(&sched, &cfg).unwrap();
        let tests = sample_test_set(&sched, &cfg).unwrap();
        (
            PreparedDataset::from_dataset(&dataset, None).unwrap(),
            tests,
        )
    }

    #[test]
    fn training_is_deterministic() {
        let (data, _) = stationary_problem(0);
        let obj = NsDpo::new(ObjectiveConfig {
            gamma: 0.9,
            ..Default::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            steps: 50,
            ..Default::default()
        };
        let (theta_a, trace_a) = train(&obj, &data, &cfg, None).unwrap();
        let (theta_b, trace_b) = train(&obj, &data, &cfg, None).unwrap();
        assert_eq!(theta_a, theta_b);
        let steps: Vec<u32> = trace_a.records.iter().map(|r| r.step).collect();
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
        for (a, b) in trace_a.records.iter().zip(&trace_b.records) {
            assert_eq!(a.loss, b.loss);
            assert_eq!(a.grad_norm, b.grad_norm);
        }
    }

    #[test]
    fn initial_loss_is_log_two_from_zero_init() {
        let (data, _) = stationary_problem(1);
        let obj = Dpo::new(ObjectiveConfig::default()).unwrap();
        let cfg = TrainConfig {
            steps: 1,
            ..Default::default()
        };
        let (_, trace) = train(&obj, &data, &cfg, None).unwrap();
        assert!((trace.records[0].loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn stationary_dpo_reaches_high_reward_accuracy() {
        let (data, tests) = stationary_problem(2);
        let obj = Dpo::new(ObjectiveConfig::default()).unwrap();
        let cfg = TrainConfig::default();
        let theta_ref = data.theta_ref().clone();
        let mut eval = |theta: &DVector<f64>| reward_accuracy(theta, &theta_ref, &tests, 1.0);
        let (theta, _) = train(&obj, &data, &cfg, Some(&mut eval)).unwrap();
        let acc = reward_accuracy(&theta, &theta_ref, &tests, 1.0);
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn null_direction_is_never_updated() {
        // Every feature difference is zero in the last coordinate, so the
        // gradient has no component there and θ keeps its initial value.
        let diffs = vec![
            DVector::from_vec(vec![1.0, 0.5, 0.0]),
            DVector::from_vec(vec![-0.3, 1.0, 0.0]),
            DVector::from_vec(vec![0.8, -0.2, 0.0]),
        ];
        let data = PreparedDataset::from_parts(
            diffs,
            vec![1, 2, 3],
            vec![1.0, 0.0, 1.0],
            5,
            DVector::zeros(3),
        )
        .unwrap();
        let obj = Dpo::new(ObjectiveConfig::default()).unwrap();
        let cfg = TrainConfig {
            steps: 100,
            init_theta: Some(vec![0.0, 0.0, 0.25]),
            ..Default::default()
        };
        let (theta, _) = train(&obj, &data, &cfg, None).unwrap();
        assert_eq!(theta[2], 0.25);
    }

    #[test]
    fn unnormalized_small_steps_descend_monotonically() {
        let (data, _) = stationary_problem(3);
        let obj = NsDpo::new(ObjectiveConfig {
            gamma: 0.9,
            ..Default::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            steps: 200,
            normalize_gradient: false,
            eval_every: 1,
            ..Default::default()
        };
        let (_, trace) = train(&obj, &data, &cfg, None).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-10);
        }
    }

    #[test]
    fn normalized_iterates_invariant_to_loss_scaling() {
        // A wrapper scaling loss and gradient by c > 0 must produce the same
        // normalized-gradient trajectory.
        struct Scaled {
            inner: Box<dyn Objective>,
            factor: f64,
        }
        impl Objective for Scaled {
            fn name(&self) -> &'static str {
                "scaled"
            }
            fn config(&self) -> &ObjectiveConfig {
                self.inner.config()
            }
            fn weights(&self, data: &PreparedDataset) -> Result<Vec<f64>, ObjectiveError> {
                self.inner.weights(data)
            }
            fn normalization(&self, data: &PreparedDataset) -> Result<f64, ObjectiveError> {
                self.inner.normalization(data)
            }
            fn loss(
                &self,
                theta: &DVector<f64>,
                data: &PreparedDataset,
            ) -> Result<LossReport, ObjectiveError> {
                let mut report = self.inner.loss(theta, data)?;
                report.value *= self.factor;
                Ok(report)
            }
            fn grad(
                &self,
                theta: &DVector<f64>,
                data: &PreparedDataset,
            ) -> Result<DVector<f64>, ObjectiveError> {
                Ok(self.inner.grad(theta, data)? * self.factor)
            }
        }

        let (data, _) = stationary_problem(4);
        let cfg = TrainConfig {
            steps: 60,
            ..Default::default()
        };
        let base = build_objective("nsdpo", ObjectiveConfig::default()).unwrap();
        let (theta_base, _) = train(base.as_ref(), &data, &cfg, None).unwrap();
        for factor in [0.01, 7.0, 1234.5] {
            let scaled = Scaled {
                inner: build_objective("nsdpo", ObjectiveConfig::default()).unwrap(),
                factor,
            };
            let (theta_scaled, _) = train(&scaled, &data, &cfg, None).unwrap();
            assert!(
                (&theta_base - &theta_scaled).norm() < 1e-9,
                "factor {factor}"
            );
        }
    }

    #[test]
    fn projection_returns_admissible_input_unchanged() {
        let (data, _) = stationary_problem(5);
        let params = PolicyParams::new(DVector::from_vec(vec![0.5, 0.0, 0.5, 0.0]), 2.0);
        let out = project_params(
            &params,
            &data,
            &ObjectiveConfig::default(),
            0.1,
            &ProjectionSettings::default(),
        )
        .unwrap();
        assert_eq!(out.params.theta, params.theta);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn projection_lands_in_ball_and_beats_radial_shrink() {
        let (data, _) = stationary_problem(6);
        let obj_cfg = ObjectiveConfig {
            gamma: 0.9,
            lambda: 0.01,
            ..Default::default()
        };
        let radius = 0.8;
        let theta_hat = DVector::from_vec(vec![2.0, -1.0, 1.5, 0.5]);
        let params = PolicyParams::new(theta_hat.clone(), radius);
        let out = project_params(
            &params,
            &data,
            &obj_cfg,
            0.05,
            &ProjectionSettings::default(),
        )
        .unwrap();
        assert!(out.params.theta.norm() <= radius + 1e-9);

        // The minimizer is no worse than the radial-shrink candidate.
        let shrink = &theta_hat * (radius / theta_hat.norm());
        let d_opt = g_tau_distance(&theta_hat, &out.params.theta, &data, &obj_cfg, 0.05).unwrap();
        let d_shrink = g_tau_distance(&theta_hat, &shrink, &data, &obj_cfg, 0.05).unwrap();
        assert!(d_opt <= d_shrink + 1e-9, "{d_opt} vs {d_shrink}");
    }

    #[test]
    fn projection_beats_any_feasible_reference_point() {
        // The data-generating parameter lies in the ball, so the projected
        // parameter's map distance must not exceed that to the truth.
        let (data, _) = stationary_problem(7);
        let obj_cfg = ObjectiveConfig {
            gamma: 0.95,
            ..Default::default()
        };
        let mut theta_star = DVector::zeros(4);
        theta_star[0] = 1.0;
        theta_star[2] = 1.0;
        let radius = theta_star.norm();
        let theta_hat = DVector::from_vec(vec![1.9, 0.3, 1.4, -0.8]);
        let out = project_params(
            &PolicyParams::new(theta_hat.clone(), radius),
            &data,
            &obj_cfg,
            0.05,
            &ProjectionSettings::default(),
        )
        .unwrap();
        let d_opt = g_tau_distance(&theta_hat, &out.params.theta, &data, &obj_cfg, 0.05).unwrap();
        let d_star = g_tau_distance(&theta_hat, &theta_star, &data, &obj_cfg, 0.05).unwrap();
        assert!(d_opt <= d_star + 1e-9, "{d_opt} vs {d_star}");
    }

    #[test]
    fn trace_csv_has_expected_columns() {
        let (data, _) = stationary_problem(8);
        let obj = Dpo::new(ObjectiveConfig::default()).unwrap();
        let cfg = TrainConfig {
            steps: 5,
            eval_every: 5,
            ..Default::default()
        };
        let (_, trace) = train(&obj, &data, &cfg, None).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,loss,grad_norm,reward_accuracy\n"));
        assert_eq!(text.lines().count(), 1 + trace.records.len());
    }
}
