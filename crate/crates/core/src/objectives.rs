//! Preference-optimization objectives over log-linear policies.
//!
//! All three objectives are weighted Bradley-Terry negative log-likelihoods
//! of the implicit reward difference `h_θ = τ·<phi(x,a) - phi(x,a'), θ - θ_ref>`,
//! and differ only in how datapoints are weighted by recency:
//!
//! - `dpo`: every point weighted 1 (stationary baseline);
//! - `nsdpo`: exponential discount `γ^{T - t - 1}` prioritizing recent points;
//! - `swdpo`: hard cutoff keeping only points with `t >= T - w`.
//!
//! Each variant implements the [`Objective`] trait and is built by name via
//! [`build_objective`], so training code and the CLI select the strategy at
//! runtime. Losses use the mean (1/n) form with an optional ridge term
//! `(λ c_σ τ² / 2)·||θ||²`; with gradient normalization enabled in the
//! optimizer the mean and sum forms produce identical trajectories.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{feature_diff, OfflineDataset, PreferenceDatapoint};
use crate::numeric::{log_sigmoid, sigmoid, sigmoid_derivative};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("invalid objective config: {0}")]
    InvalidConfig(String),
    #[error("unknown objective '{0}'; expected one of dpo, nsdpo, swdpo")]
    UnknownObjective(String),
    #[error("sliding window of size {window} contains no datapoints (T = {horizon})")]
    EmptyWindow { window: u32, horizon: u32 },
    #[error("non-finite {what} encountered (logit overflow)")]
    NonFinite { what: &'static str },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("parameter dimension {got} does not match feature dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Hyperparameters shared by the objective family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// KL coefficient τ of the implicit reward.
    pub tau: f64,
    /// Discount in (0, 1]; at exactly 1 the discounted objective reduces to
    /// the stationary one.
    pub gamma: f64,
    /// Ridge coefficient λ; 0 disables regularization.
    pub lambda: f64,
    /// Sliding-window width (swdpo only).
    pub window: Option<u32>,
    /// Sigmoid curvature floor c_σ entering the ridge term; irrelevant when
    /// λ = 0. Supply from the analysis module when regularizing.
    pub c_sigma: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            gamma: 0.9,
            lambda: 0.0,
            window: None,
            c_sigma: 0.25,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.tau > 0.0) {
            return Err(ObjectiveError::InvalidConfig("tau must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ObjectiveError::InvalidConfig(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.lambda < 0.0 {
            return Err(ObjectiveError::InvalidConfig(
                "lambda must be nonnegative".into(),
            ));
        }
        if !(self.c_sigma > 0.0) {
            return Err(ObjectiveError::InvalidConfig(
                "c_sigma must be positive".into(),
            ));
        }
        if let Some(w) = self.window {
            if w < 1 {
                return Err(ObjectiveError::InvalidConfig("window must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Coefficient of θ in the ridge gradient, `λ c_σ τ²`.
    fn ridge_coefficient(&self) -> f64 {
        self.lambda * self.c_sigma * self.tau * self.tau
    }
}

/// Loss value plus the per-point recency weights that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossReport {
    pub value: f64,
    pub per_point_weights: Vec<f64>,
}

/// An offline dataset prepared for repeated objective evaluations: feature
/// differences (winner minus loser), time steps, preference labels and the
/// reference parameter.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    diffs: Vec<DVector<f64>>,
    steps: Vec<u32>,
    labels: Vec<f64>,
    horizon: u32,
    theta_ref: DVector<f64>,
    dim: usize,
}

impl PreparedDataset {
    /// Precomputes feature differences for every datapoint. `theta_ref: None`
    /// means the uniform reference policy (zero parameter).
    pub fn from_dataset(
        dataset: &OfflineDataset,
        theta_ref: Option<DVector<f64>>,
    ) -> Result<Self, ObjectiveError> {
        if dataset.is_empty() {
            return Err(ObjectiveError::EmptyDataset);
        }
        let dim = 2 * dataset.points()[0].context.dim();
        let theta_ref = theta_ref.unwrap_or_else(|| DVector::zeros(dim));
        if theta_ref.len() != dim {
            return Err(ObjectiveError::DimensionMismatch {
                got: theta_ref.len(),
                expected: dim,
            });
        }
        let mut diffs = Vec::with_capacity(dataset.len());
        let mut steps = Vec::with_capacity(dataset.len());
        let mut labels = Vec::with_capacity(dataset.len());
        for p in dataset.points() {
            let diff = feature_diff(&p.context, p.winner, p.loser);
            if diff.len() != dim {
                return Err(ObjectiveError::DimensionMismatch {
                    got: diff.len(),
                    expected: dim,
                });
            }
            diffs.push(diff);
            steps.push(p.t);
            labels.push(p.label as f64);
        }
        Ok(Self {
            diffs,
            steps,
            labels,
            horizon: dataset.horizon(),
            theta_ref,
            dim,
        })
    }

    /// Builds a prepared dataset directly from raw parts (used by tests and
    /// diagnostics that construct synthetic feature differences).
    pub fn from_parts(
        diffs: Vec<DVector<f64>>,
        steps: Vec<u32>,
        labels: Vec<f64>,
        horizon: u32,
        theta_ref: DVector<f64>,
    ) -> Result<Self, ObjectiveError> {
        if diffs.is_empty() {
            return Err(ObjectiveError::EmptyDataset);
        }
        if diffs.len() != steps.len() || diffs.len() != labels.len() {
            return Err(ObjectiveError::InvalidConfig(
                "diffs, steps and labels must have equal length".into(),
            ));
        }
        if horizon < 2 || steps.iter().any(|&t| t < 1 || t > horizon - 1) {
            return Err(ObjectiveError::InvalidConfig(format!(
                "steps must lie in [1, {}]",
                horizon.saturating_sub(1)
            )));
        }
        if labels.iter().any(|&o| !(0.0..=1.0).contains(&o)) {
            return Err(ObjectiveError::InvalidConfig(
                "labels must lie in [0, 1]".into(),
            ));
        }
        let dim = diffs[0].len();
        for d in &diffs {
            if d.len() != dim {
                return Err(ObjectiveError::DimensionMismatch {
                    got: d.len(),
                    expected: dim,
                });
            }
        }
        if theta_ref.len() != dim {
            return Err(ObjectiveError::DimensionMismatch {
                got: theta_ref.len(),
                expected: dim,
            });
        }
        Ok(Self {
            diffs,
            steps,
            labels,
            horizon,
            theta_ref,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.diffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn theta_ref(&self) -> &DVector<f64> {
        &self.theta_ref
    }

    pub fn feature_diffs(&self) -> &[DVector<f64>] {
        &self.diffs
    }

    pub fn steps(&self) -> &[u32] {
        &self.steps
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Discount weights `γ^{T - t_i - 1}` for every datapoint.
    pub fn discount_weights(&self, gamma: f64) -> Vec<f64> {
        self.steps
            .iter()
            .map(|&t| gamma.powi((self.horizon - t - 1) as i32))
            .collect()
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<(), ObjectiveError> {
        if theta.len() != self.dim {
            return Err(ObjectiveError::DimensionMismatch {
                got: theta.len(),
                expected: self.dim,
            });
        }
        Ok(())
    }
}

/// Implicit reward difference `h_θ(x, a, a')` of a single datapoint; for
/// log-linear policies this is `τ·<phi(x,a) - phi(x,a'), θ - θ_ref>` and it
/// is antisymmetric in the action pair. The softmax normalization constants
/// of the two policies cancel in the difference and are never computed.
pub fn implicit_reward_diff(
    theta: &DVector<f64>,
    theta_ref: &DVector<f64>,
    point: &PreferenceDatapoint,
    tau: f64,
) -> f64 {
    let diff = feature_diff(&point.context, point.winner, point.loser);
    tau * diff.dot(&(theta - theta_ref))
}

/// A preference-optimization objective: loss and gradient as functions of the
/// policy parameter on a prepared dataset.
pub trait Objective: Send + Sync {
    /// Registry name of the strategy.
    fn name(&self) -> &'static str;

    fn config(&self) -> &ObjectiveConfig;

    /// Per-point recency weights on this dataset.
    fn weights(&self, data: &PreparedDataset) -> Result<Vec<f64>, ObjectiveError>;

    /// Normalization constant applied to the weighted sum.
    fn normalization(&self, data: &PreparedDataset) -> Result<f64, ObjectiveError>;

    fn loss(
        &self,
        theta: &DVector<f64>,
        data: &PreparedDataset,
    ) -> Result<LossReport, ObjectiveError> {
        data.check_theta(theta)?;
        let cfg = self.config();
        let weights = self.weights(data)?;
        let norm = self.normalization(data)?;
        let shifted = theta - data.theta_ref();
        let mut sum = 0.0;
        for ((diff, &label), &w) in data.diffs.iter().zip(&data.labels).zip(&weights) {
            if w == 0.0 {
                continue;
            }
            let h = cfg.tau * diff.dot(&shifted);
            if !h.is_finite() {
                return Err(ObjectiveError::NonFinite { what: "logit" });
            }
            sum += w * (-label * log_sigmoid(h) - (1.0 - label) * log_sigmoid(-h));
        }
        let value = norm * sum + 0.5 * cfg.ridge_coefficient() * theta.norm_squared();
        if !value.is_finite() {
            return Err(ObjectiveError::NonFinite { what: "loss" });
        }
        Ok(LossReport {
            value,
            per_point_weights: weights,
        })
    }

    fn grad(
        &self,
        theta: &DVector<f64>,
        data: &PreparedDataset,
    ) -> Result<DVector<f64>, ObjectiveError> {
        data.check_theta(theta)?;
        let cfg = self.config();
        let weights = self.weights(data)?;
        let norm = self.normalization(data)?;
        let shifted = theta - data.theta_ref();
        let mut grad = DVector::zeros(data.dim);
        for ((diff, &label), &w) in data.diffs.iter().zip(&data.labels).zip(&weights) {
            if w == 0.0 {
                continue;
            }
            let h = cfg.tau * diff.dot(&shifted);
            if !h.is_finite() {
                return Err(ObjectiveError::NonFinite { what: "logit" });
            }
            grad.axpy(norm * cfg.tau * w * (sigmoid(h) - label), diff, 1.0);
        }
        grad.axpy(cfg.ridge_coefficient(), theta, 1.0);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(ObjectiveError::NonFinite { what: "gradient" });
        }
        Ok(grad)
    }

    /// Hessian of the loss at θ: `norm·Σ τ² w_i σ'(h_i) φ̂_i φ̂_i' + λ c_σ τ² I`.
    /// Positive semidefinite for every weight rule.
    fn hessian(
        &self,
        theta: &DVector<f64>,
        data: &PreparedDataset,
    ) -> Result<DMatrix<f64>, ObjectiveError> {
        data.check_theta(theta)?;
        let cfg = self.config();
        let weights = self.weights(data)?;
        let norm = self.normalization(data)?;
        let shifted = theta - data.theta_ref();
        let mut hess = DMatrix::zeros(data.dim, data.dim);
        for (diff, &w) in data.diffs.iter().zip(&weights) {
            if w == 0.0 {
                continue;
            }
            let h = cfg.tau * diff.dot(&shifted);
            let scale = norm * cfg.tau * cfg.tau * w * sigmoid_derivative(h);
            hess.ger(scale, diff, diff, 1.0);
        }
        for i in 0..data.dim {
            hess[(i, i)] += cfg.ridge_coefficient();
        }
        Ok(hess)
    }
}

/// Exponentially discounted objective: weight `γ^{T - t - 1}` per point.
pub struct NsDpo {
    cfg: ObjectiveConfig,
}

/// Stationary objective: unit weight per point.
pub struct Dpo {
    cfg: ObjectiveConfig,
}

/// Sliding-window objective: only points with `t >= T - w` contribute, with
/// the mean taken over the in-window count.
pub struct SwDpo {
    cfg: ObjectiveConfig,
}

impl NsDpo {
    pub fn new(cfg: ObjectiveConfig) -> Result<Self, ObjectiveError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl Dpo {
    pub fn new(cfg: ObjectiveConfig) -> Result<Self, ObjectiveError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl SwDpo {
    pub fn new(cfg: ObjectiveConfig) -> Result<Self, ObjectiveError> {
        cfg.validate()?;
        if cfg.window.is_none() {
            return Err(ObjectiveError::InvalidConfig(
                "swdpo requires a window size".into(),
            ));
        }
        Ok(Self { cfg })
    }

    fn in_window(&self, data: &PreparedDataset) -> Vec<bool> {
        let w = self.cfg.window.expect("validated at construction");
        let cutoff = data.horizon.saturating_sub(w);
        data.steps.iter().map(|&t| t >= cutoff).collect()
    }
}

impl Objective for NsDpo {
    fn name(&self) -> &'static str {
        "nsdpo"
    }

    fn config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    fn weights(&self, data: &PreparedDataset) -> Result<Vec<f64>, ObjectiveError> {
        Ok(data.discount_weights(self.cfg.gamma))
    }

    fn normalization(&self, data: &PreparedDataset) -> Result<f64, ObjectiveError> {
        Ok(1.0 / data.len() as f64)
    }
}

impl Objective for Dpo {
    fn name(&self) -> &'static str {
        "dpo"
    }

    fn config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    fn weights(&self, data: &PreparedDataset) -> Result<Vec<f64>, ObjectiveError> {
        Ok(vec![1.0; data.len()])
    }

    fn normalization(&self, data: &PreparedDataset) -> Result<f64, ObjectiveError> {
        Ok(1.0 / data.len() as f64)
    }
}

impl Objective for SwDpo {
    fn name(&self) -> &'static str {
        "swdpo"
    }

    fn config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    fn weights(&self, data: &PreparedDataset) -> Result<Vec<f64>, ObjectiveError> {
        Ok(self
            .in_window(data)
            .into_iter()
            .map(|b| if b { 1.0 } else { 0.0 })
            .collect())
    }

    fn normalization(&self, data: &PreparedDataset) -> Result<f64, ObjectiveError> {
        let count = self.in_window(data).into_iter().filter(|&b| b).count();
        if count == 0 {
            return Err(ObjectiveError::EmptyWindow {
                window: self.cfg.window.expect("validated"),
                horizon: data.horizon,
            });
        }
        Ok(1.0 / count as f64)
    }
}

/// Names accepted by [`build_objective`].
pub const OBJECTIVE_NAMES: [&str; 3] = ["dpo", "nsdpo", "swdpo"];

/// Builds an objective strategy by registry name.
pub fn build_objective(
    name: &str,
    cfg: ObjectiveConfig,
) -> Result<Box<dyn Objective>, ObjectiveError> {
    match name {
        "dpo" => Ok(Box::new(Dpo::new(cfg)?)),
        "nsdpo" => Ok(Box::new(NsDpo::new(cfg)?)),
        "swdpo" => Ok(Box::new(SwDpo::new(cfg)?)),
        other => Err(ObjectiveError::UnknownObjective(other.to_string())),
    }
}

/// The parameter-dependent part of the discounted gradient,
/// `g(θ) = (1/n)·Σ τ γ^{T-t_i-1} σ(h_θ(i)) φ̂_i + λ c_σ τ² θ`.
/// Parameter projection compares values of this map between candidates.
pub fn g_tau(
    theta: &DVector<f64>,
    data: &PreparedDataset,
    cfg: &ObjectiveConfig,
) -> Result<DVector<f64>, ObjectiveError> {
    data.check_theta(theta)?;
    let weights = data.discount_weights(cfg.gamma);
    let norm = 1.0 / data.len() as f64;
    let shifted = theta - data.theta_ref();
    let mut out = DVector::zeros(data.dim);
    for (diff, &w) in data.diffs.iter().zip(&weights) {
        let h = cfg.tau * diff.dot(&shifted);
        out.axpy(norm * cfg.tau * w * sigmoid(h), diff, 1.0);
    }
    out.axpy(cfg.ridge_coefficient(), theta, 1.0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        sample_dataset, Action, Context, DriftSchedule, EnvConfig, SampleConfig,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_dataset(seed: u64) -> OfflineDataset {
        let sched = DriftSchedule::circular_default(2);
        let cfg = SampleConfig::new(EnvConfig::new(2, 4).unwrap(), 1.0, 2, 5, seed);
        sample_dataset(&sched, &cfg).unwrap()
    }

    fn random_theta(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DVector<f64> {
        DVector::from_iterator(dim, (0..dim).map(|_| scale * (rng.random::<f64>() - 0.5)))
    }

    /// Central finite differences of the loss; the independent oracle for
    /// every analytic gradient in this module.
    fn finite_difference_grad(
        obj: &dyn Objective,
        theta: &DVector<f64>,
        data: &PreparedDataset,
        h: f64,
    ) -> DVector<f64> {
        let mut g = DVector::zeros(theta.len());
        for k in 0..theta.len() {
            let mut up = theta.clone();
            up[k] += h;
            let mut down = theta.clone();
            down[k] -= h;
            let lu = obj.loss(&up, data).unwrap().value;
            let ld = obj.loss(&down, data).unwrap().value;
            g[k] = (lu - ld) / (2.0 * h);
        }
        g
    }

    #[test]
    fn implicit_reward_diff_identities() {
        let ctx = Context::new(vec![0.3, 0.8]).unwrap();
        let point = PreferenceDatapoint::new(ctx.clone(), Action(1), Action(3), 5, 1).unwrap();
        let theta_ref = DVector::from_vec(vec![0.2, -0.1, 0.4, 0.0]);

        // θ = θ_ref gives a zero reward difference.
        assert_eq!(
            implicit_reward_diff(&theta_ref, &theta_ref, &point, 2.0),
            0.0
        );

        // Swapping the pair negates the value.
        let theta = DVector::from_vec(vec![1.0, 0.5, -0.3, 0.2]);
        let swapped = PreferenceDatapoint::new(ctx.clone(), Action(3), Action(1), 5, 0).unwrap();
        let fwd = implicit_reward_diff(&theta, &theta_ref, &point, 2.0);
        let bwd = implicit_reward_diff(&theta, &theta_ref, &swapped, 2.0);
        assert!((fwd + bwd).abs() < 1e-12);

        // θ - θ_ref aligned with φ̂ / ||φ̂||² recovers exactly τ.
        let diff = feature_diff(&ctx, Action(1), Action(3));
        let theta2 = &theta_ref + &diff / diff.norm_squared();
        let tau = 1.7;
        assert!((implicit_reward_diff(&theta2, &theta_ref, &point, tau) - tau).abs() < 1e-12);
    }

    #[test]
    fn loss_at_reference_is_weighted_log_two() {
        let data = PreparedDataset::from_dataset(&small_dataset(1), None).unwrap();
        let cfg = ObjectiveConfig {
            gamma: 0.8,
            ..Default::default()
        };
        let obj = NsDpo::new(cfg.clone()).unwrap();
        let theta = DVector::zeros(data.dim());
        let report = obj.loss(&theta, &data).unwrap();
        let expect = data.discount_weights(cfg.gamma).iter().sum::<f64>()
            / data.len() as f64
            * 2.0f64.ln();
        assert!((report.value - expect).abs() < 1e-12);

        // DPO at the reference is exactly log 2.
        let dpo = Dpo::new(ObjectiveConfig::default()).unwrap();
        let report = dpo.loss(&theta, &data).unwrap();
        assert!((report.value - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gamma_one_reduces_to_dpo_exactly() {
        let data = PreparedDataset::from_dataset(&small_dataset(2), None).unwrap();
        let ns = NsDpo::new(ObjectiveConfig {
            gamma: 1.0,
            ..Default::default()
        })
        .unwrap();
        let dpo = Dpo::new(ObjectiveConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let theta = random_theta(&mut rng, data.dim(), 2.0);
            assert_eq!(
                ns.loss(&theta, &data).unwrap().value,
                dpo.loss(&theta, &data).unwrap().value
            );
            assert_eq!(ns.grad(&theta, &data).unwrap(), dpo.grad(&theta, &data).unwrap());
        }
    }

    #[test]
    fn newest_point_has_unit_weight() {
        let dim = 4;
        let data = PreparedDataset::from_parts(
            vec![DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])],
            vec![100],
            vec![1.0],
            101,
            DVector::zeros(dim),
        )
        .unwrap();
        let obj = NsDpo::new(ObjectiveConfig {
            gamma: 0.5,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(obj.weights(&data).unwrap(), vec![1.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let dataset = small_dataset(4);
        let data = PreparedDataset::from_dataset(&dataset, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let objectives: Vec<Box<dyn Objective>> = vec![
            Box::new(Dpo::new(ObjectiveConfig::default()).unwrap()),
            Box::new(
                NsDpo::new(ObjectiveConfig {
                    gamma: 0.85,
                    lambda: 0.03,
                    ..Default::default()
                })
                .unwrap(),
            ),
            Box::new(
                SwDpo::new(ObjectiveConfig {
                    window: Some(40),
                    ..Default::default()
                })
                .unwrap(),
            ),
        ];
        for obj in &objectives {
            for _ in 0..10 {
                let theta = random_theta(&mut rng, data.dim(), 1.5);
                let analytic = obj.grad(&theta, &data).unwrap();
                let numeric = finite_difference_grad(obj.as_ref(), &theta, &data, 1e-5);
                let rel = (&analytic - &numeric).norm() / analytic.norm().max(1e-12);
                assert!(rel < 1e-6, "{}: relative error {rel}", obj.name());
            }
        }
    }

    #[test]
    fn single_point_gradient_at_origin() {
        // σ(0) - 1 = -1/2, so the gradient is -(τ/2)·γ^{T-t-1}·φ̂.
        let diff = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.3]);
        let data = PreparedDataset::from_parts(
            vec![diff.clone()],
            vec![90],
            vec![1.0],
            101,
            DVector::zeros(4),
        )
        .unwrap();
        let cfg = ObjectiveConfig {
            tau: 1.4,
            gamma: 0.9,
            ..Default::default()
        };
        let obj = NsDpo::new(cfg.clone()).unwrap();
        let grad = obj.grad(&DVector::zeros(4), &data).unwrap();
        let expect = -(cfg.tau / 2.0) * cfg.gamma.powi(10) * diff;
        assert!((grad - expect).norm() < 1e-14);
    }

    #[test]
    fn gradient_vanishes_at_newton_minimizer() {
        // λ > 0 makes the loss strictly convex; Newton converges to the
        // unconstrained minimizer where the gradient must vanish.
        let data = PreparedDataset::from_dataset(&small_dataset(6), None).unwrap();
        let cfg = ObjectiveConfig {
            gamma: 0.9,
            lambda: 0.05,
            ..Default::default()
        };
        let obj = NsDpo::new(cfg).unwrap();
        let mut theta = DVector::zeros(data.dim());
        for _ in 0..50 {
            let g = obj.grad(&theta, &data).unwrap();
            if g.norm() < 1e-12 {
                break;
            }
            let h = obj.hessian(&theta, &data).unwrap();
            let step = h.lu().solve(&g).unwrap();
            theta -= step;
        }
        assert!(obj.grad(&theta, &data).unwrap().norm() < 1e-8);
    }

    #[test]
    fn sliding_window_edge_cases() {
        let dataset = small_dataset(7);
        let data = PreparedDataset::from_dataset(&dataset, None).unwrap();
        let horizon = data.horizon();

        // A window covering all training steps is exactly DPO.
        let wide = SwDpo::new(ObjectiveConfig {
            window: Some(horizon - 1),
            ..Default::default()
        })
        .unwrap();
        let dpo = Dpo::new(ObjectiveConfig::default()).unwrap();
        let theta = DVector::from_vec(vec![0.3, -0.4, 1.0, 0.2]);
        assert_eq!(
            wide.loss(&theta, &data).unwrap().value,
            dpo.loss(&theta, &data).unwrap().value
        );

        // Window 1 keeps only the newest step.
        let narrow = SwDpo::new(ObjectiveConfig {
            window: Some(1),
            ..Default::default()
        })
        .unwrap();
        let weights = narrow.weights(&data).unwrap();
        for (w, &t) in weights.iter().zip(data.steps()) {
            assert_eq!(*w > 0.0, t >= horizon - 1);
        }

        // An empty window is an explicit error: keep only t >= T but the
        // training range ends at T - 1.
        let empty = PreparedDataset::from_parts(
            vec![DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])],
            vec![10],
            vec![1.0],
            101,
            DVector::zeros(4),
        )
        .unwrap();
        let narrow2 = SwDpo::new(ObjectiveConfig {
            window: Some(5),
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            narrow2.loss(&theta, &empty),
            Err(ObjectiveError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn window_over_default_drift_uses_only_post_drift_data() {
        // w = 33 on T = 101 keeps t >= 68, i.e. only steps after the drift.
        let sched = DriftSchedule::circular_default(4);
        let cfg = SampleConfig::new(EnvConfig::new(4, 16).unwrap(), 1.0, 1, 5, 0);
        let dataset = sample_dataset(&sched, &cfg).unwrap();
        let data = PreparedDataset::from_dataset(&dataset, None).unwrap();
        let sw = SwDpo::new(ObjectiveConfig {
            window: Some(33),
            ..Default::default()
        })
        .unwrap();
        let weights = sw.weights(&data).unwrap();
        for (w, &t) in weights.iter().zip(data.steps()) {
            assert_eq!(*w > 0.0, t >= 68, "t = {t}");
        }
    }

    #[test]
    fn discount_weights_monotone_in_age() {
        let data = PreparedDataset::from_dataset(&small_dataset(8), None).unwrap();
        for gamma in [0.3, 0.7, 0.99] {
            let w = data.discount_weights(gamma);
            for (i, (&wi, &ti)) in w.iter().zip(data.steps()).enumerate() {
                assert!(wi > 0.0 && wi <= 1.0);
                for (j, (&wj, &tj)) in w.iter().zip(data.steps()).enumerate() {
                    if i != j && ti < tj {
                        assert!(wi < wj, "older point must weigh strictly less");
                    }
                }
            }
        }
    }

    #[test]
    fn loss_is_continuous_in_gamma_near_one() {
        let data = PreparedDataset::from_dataset(&small_dataset(9), None).unwrap();
        let theta = DVector::from_vec(vec![0.5, 0.1, -0.7, 0.9]);
        let dpo_value = Dpo::new(ObjectiveConfig::default())
            .unwrap()
            .loss(&theta, &data)
            .unwrap()
            .value;
        let mut prev_gap = f64::INFINITY;
        for gamma in [0.9, 0.99, 0.9999, 1.0 - 1e-8] {
            let ns = NsDpo::new(ObjectiveConfig {
                gamma,
                ..Default::default()
            })
            .unwrap();
            let gap = (ns.loss(&theta, &data).unwrap().value - dpo_value).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-5);
    }

    #[test]
    fn hessian_is_positive_semidefinite_by_sampling() {
        let data = PreparedDataset::from_dataset(&small_dataset(10), None).unwrap();
        let obj = NsDpo::new(ObjectiveConfig {
            gamma: 0.8,
            lambda: 0.01,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let theta = random_theta(&mut rng, data.dim(), 2.0);
            let hess = obj.hessian(&theta, &data).unwrap();
            let v = random_theta(&mut rng, data.dim(), 1.0);
            assert!(v.dot(&(&hess * &v)) >= -1e-10);
        }
    }

    #[test]
    fn prepared_dataset_rejects_out_of_range_parts() {
        let diff = vec![DVector::from_vec(vec![1.0, 0.0])];
        let theta_ref = DVector::zeros(2);
        // A step at the evaluation horizon has no discount weight.
        assert!(PreparedDataset::from_parts(
            diff.clone(),
            vec![101],
            vec![1.0],
            101,
            theta_ref.clone()
        )
        .is_err());
        assert!(
            PreparedDataset::from_parts(diff.clone(), vec![0], vec![1.0], 101, theta_ref.clone())
                .is_err()
        );
        assert!(
            PreparedDataset::from_parts(diff, vec![5], vec![1.5], 101, theta_ref).is_err()
        );
    }

    #[test]
    fn overflowing_logit_is_reported_not_propagated() {
        let diff = DVector::from_vec(vec![1e200, 0.0, 0.0, 0.0]);
        let data =
            PreparedDataset::from_parts(vec![diff], vec![1], vec![1.0], 5, DVector::zeros(4))
                .unwrap();
        let obj = NsDpo::new(ObjectiveConfig::default()).unwrap();
        let theta = DVector::from_vec(vec![1e200, 0.0, 0.0, 0.0]);
        assert!(matches!(
            obj.loss(&theta, &data),
            Err(ObjectiveError::NonFinite { what: "logit" })
        ));
        assert!(matches!(
            obj.grad(&theta, &data),
            Err(ObjectiveError::NonFinite { what: "logit" })
        ));
    }

    #[test]
    fn registry_builds_all_names_and_rejects_unknown() {
        for name in OBJECTIVE_NAMES {
            let cfg = ObjectiveConfig {
                window: Some(10),
                ..Default::default()
            };
            let obj = build_objective(name, cfg).unwrap();
            assert_eq!(obj.name(), name);
        }
        assert!(matches!(
            build_objective("ipo", ObjectiveConfig::default()),
            Err(ObjectiveError::UnknownObjective(_))
        ));
    }

    #[test]
    fn g_tau_shifts_gradient_by_label_moment() {
        // grad = g_tau - (1/n)·Σ τ γ^w o_i φ̂_i, so the two must agree after
        // adding the label moment back.
        let data = PreparedDataset::from_dataset(&small_dataset(12), None).unwrap();
        let cfg = ObjectiveConfig {
            gamma: 0.9,
            lambda: 0.02,
            ..Default::default()
        };
        let obj = NsDpo::new(cfg.clone()).unwrap();
        let theta = DVector::from_vec(vec![0.4, -0.2, 0.1, 0.6]);
        let grad = obj.grad(&theta, &data).unwrap();
        let g = g_tau(&theta, &data, &cfg).unwrap();
        let weights = data.discount_weights(cfg.gamma);
        let mut label_moment = DVector::zeros(data.dim());
        for ((diff, &o), &w) in data
            .feature_diffs()
            .iter()
            .zip(data.labels())
            .zip(&weights)
        {
            label_moment.axpy(cfg.tau * w * o / data.len() as f64, diff, 1.0);
        }
        assert!((grad - (g - label_moment)).norm() < 1e-12);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn arbitrary_dataset() -> impl Strategy<Value = (PreparedDataset, Vec<f64>)> {
        let point = (
            prop::collection::vec(-2.0f64..2.0, 4),
            1u32..100,
            prop::bool::ANY,
        );
        prop::collection::vec(point, 1..20).prop_map(|points| {
            let mut diffs = Vec::new();
            let mut steps = Vec::new();
            let mut labels = Vec::new();
            for (coords, t, label) in points {
                diffs.push(DVector::from_vec(coords));
                steps.push(t);
                labels.push(if label { 1.0 } else { 0.0 });
            }
            let data =
                PreparedDataset::from_parts(diffs, steps, labels, 101, DVector::zeros(4)).unwrap();
            let theta = vec![0.3, -0.8, 0.2, 0.5];
            (data, theta)
        })
    }

    proptest! {
        /// Flipping (winner, loser) and the label together leaves the loss
        /// unchanged: the labeled form is symmetric under relabeling.
        #[test]
        fn label_flip_symmetry((data, theta) in arbitrary_dataset()) {
            let flipped = PreparedDataset::from_parts(
                data.feature_diffs().iter().map(|d| -d).collect(),
                data.steps().to_vec(),
                data.labels().iter().map(|o| 1.0 - o).collect(),
                data.horizon(),
                data.theta_ref().clone(),
            ).unwrap();
            let theta = DVector::from_vec(theta);
            let obj = NsDpo::new(ObjectiveConfig { gamma: 0.9, ..Default::default() }).unwrap();
            let a = obj.loss(&theta, &data).unwrap().value;
            let b = obj.loss(&theta, &flipped).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
