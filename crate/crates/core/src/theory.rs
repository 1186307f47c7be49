//! Computable objects of the estimation-error analysis: sigmoid
//! non-linearity coefficients, the variation budget of a drift schedule, the
//! discount selection rule, the estimation/regret bound terms, the curvature
//! matrix PSD check and the learning/tracking decomposition of the error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{DriftSchedule, EnvError};
use crate::metrics::{sigma_hat, MetricsError};
use crate::numeric::{
    gauss_legendre_unit, inverse_quadratic_norm, min_eigenvalue, sigmoid, sigmoid_derivative,
};
use crate::objectives::PreparedDataset;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("variation budget {b_t} must lie in (0, d·T) = (0, {limit}) for discount selection")]
    BudgetOutOfRange { b_t: f64, limit: f64 },
    #[error("gamma must lie in (0, 1) for the bound evaluation, got {0}")]
    GammaOutOfRange(f64),
    #[error("quadrature failed to converge: 33- and 65-point rules differ by {0:.3e}")]
    QuadratureDisagreement(f64),
    #[error("norm matrix is singular; use lambda > 0")]
    SingularNorm,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Sigmoid curvature extremes over the admissible logit range
/// `|τ·<φ̂, θ>| <= 2τLW`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NonlinearityCoeffs {
    /// Supremum of σ' over the range: the global maximum 1/4.
    pub k_sigma: f64,
    /// Infimum of σ' over the range: `σ'(2τLW)`, since σ' is even and
    /// decreasing in |z|.
    pub c_sigma: f64,
    /// `k_sigma / c_sigma`.
    pub ratio: f64,
}

/// Curvature extremes for features bounded by `L` and parameters bounded by
/// `W` under the KL coefficient `τ`.
pub fn nonlinearity_coeffs(tau: f64, feature_bound: f64, param_radius: f64) -> NonlinearityCoeffs {
    let k_sigma = 0.25;
    let c_sigma = sigmoid_derivative(2.0 * tau * feature_bound * param_radius);
    NonlinearityCoeffs {
        k_sigma,
        c_sigma,
        ratio: k_sigma / c_sigma,
    }
}

/// Exact path length of the drift parameter over the horizon,
/// `Σ_{t=1}^{T-1} ||θ*_{t+1} - θ*_t||_2`.
pub fn variation_budget(schedule: &DriftSchedule) -> Result<f64, TheoryError> {
    let mut total = 0.0;
    let mut prev = schedule.param_at_step(1)?;
    for t in 2..=schedule.horizon() {
        let next = schedule.param_at_step(t)?;
        total += (&next - &prev).norm();
        prev = next;
    }
    Ok(total)
}

/// The discount selection rule `γ = 1 - sqrt(B_T / (dT))`. Requires
/// `0 < B_T < dT` for a γ in (0, 1).
pub fn gamma_from_budget(b_t: f64, d: usize, horizon: u32) -> Result<f64, TheoryError> {
    let limit = d as f64 * horizon as f64;
    if !(b_t > 0.0 && b_t < limit) {
        return Err(TheoryError::BudgetOutOfRange { b_t, limit });
    }
    Ok(1.0 - (b_t / limit).sqrt())
}

/// The algebraic identity behind the discount selection: with
/// `γ = 1 - sqrt(B_T/(dT))` one has `T(1-γ) = sqrt(T·B_T/d)`, hence
/// `2/(T(1-γ)) = 2·sqrt(d/(T·B_T))`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GammaSelectionIdentity {
    pub gamma: f64,
    /// `2 / (T·(1 - γ))`.
    pub lhs: f64,
    /// `2·sqrt(d / (T·B_T))`.
    pub rhs: f64,
    /// Relative residual `|lhs - rhs| / rhs`.
    pub residual: f64,
}

pub fn gamma_selection_identity(
    b_t: f64,
    d: usize,
    horizon: u32,
) -> Result<GammaSelectionIdentity, TheoryError> {
    let gamma = gamma_from_budget(b_t, d, horizon)?;
    let t = horizon as f64;
    let lhs = 2.0 / (t * (1.0 - gamma));
    let rhs = 2.0 * (d as f64 / (t * b_t)).sqrt();
    Ok(GammaSelectionIdentity {
        gamma,
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / rhs,
    })
}

/// All constants of the estimation/regret analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryConfig {
    /// Parameter-ball radius W.
    pub param_radius: f64,
    /// Feature-norm bound L.
    pub feature_bound: f64,
    pub tau: f64,
    pub lambda: f64,
    /// Confidence level; the bound holds with probability 1 - 2δ.
    pub delta: f64,
    pub d: usize,
    pub horizon: u32,
    pub n: usize,
    pub m_lower: f64,
    pub m_upper: f64,
    /// Variation budget B_T of the drift.
    pub variation_budget: f64,
    /// Reward-range bound; `τ·2LW` for the log-linear environment.
    pub r_max: f64,
    /// Unspecified universal constants; only scalings are checkable, so they
    /// default to 1 and 1/2.
    pub c1: f64,
    pub c2: f64,
    /// Coverage condition number.
    pub kappa: f64,
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<(), TheoryError> {
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(TheoryError::InvalidInput(format!(
                "delta must lie in (0, 1/2], got {}",
                self.delta
            )));
        }
        if !(self.c2 > 0.0 && self.c2 < 1.0) {
            return Err(TheoryError::InvalidInput(format!(
                "c2 must lie in (0, 1), got {}",
                self.c2
            )));
        }
        let positives = [
            ("param_radius", self.param_radius),
            ("feature_bound", self.feature_bound),
            ("tau", self.tau),
            ("r_max", self.r_max),
            ("c1", self.c1),
            ("kappa", self.kappa),
            ("m_lower", self.m_lower),
            ("m_upper", self.m_upper),
        ];
        for (name, value) in positives {
            if !(value > 0.0) {
                return Err(TheoryError::InvalidInput(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.lambda < 0.0 {
            return Err(TheoryError::InvalidInput(
                "lambda must be nonnegative".into(),
            ));
        }
        if self.variation_budget < 0.0 {
            return Err(TheoryError::InvalidInput(
                "variation_budget must be nonnegative".into(),
            ));
        }
        if self.m_upper < self.m_lower {
            return Err(TheoryError::InvalidInput(
                "m_upper must be at least m_lower".into(),
            ));
        }
        if self.d == 0 || self.n == 0 || self.horizon < 2 {
            return Err(TheoryError::InvalidInput(
                "d, n must be positive and horizon >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Assembles the config for a synthetic run: radii and bounds from the
    /// environment and schedule, temporal coverage from the dataset.
    pub fn for_synthetic(
        schedule: &DriftSchedule,
        dataset: &crate::env::OfflineDataset,
        env: &crate::env::EnvConfig,
        tau: f64,
        lambda: f64,
        delta: f64,
        kappa: f64,
    ) -> Result<Self, TheoryError> {
        let param_radius = schedule.max_param_norm();
        let feature_bound = crate::env::feature_norm_bound(env.d_x, env.n_actions);
        let (m_lower, m_upper) = dataset.temporal_coverage();
        let cfg = Self {
            param_radius,
            feature_bound,
            tau,
            lambda,
            delta,
            d: env.feature_dim(),
            horizon: schedule.horizon(),
            n: dataset.len(),
            m_lower: m_lower as f64,
            m_upper: m_upper as f64,
            variation_budget: variation_budget(schedule)?,
            r_max: tau * 2.0 * feature_bound * param_radius,
            c1: 1.0,
            c2: 0.5,
            kappa,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The estimation-error bound split into its named pieces. The regret bound
/// is `regret_prefactor * (learning_term + tracking_term)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundBreakdown {
    pub learning_term: f64,
    pub tracking_term: f64,
    pub regret_prefactor: f64,
    pub regret_bound: f64,
}

/// Evaluates the estimation-error and regret bound right-hand sides:
///
/// ```text
/// learning = 2·sqrt(λ)·W + (2·C1/(τ·c_σ))·sqrt((d + log(1/δ)) / n)
/// tracking = (16·L·R_σ·m̄ / (T·(1-γ)^{3/2}))·sqrt(d·m̄/n)·B_T
/// prefactor = r_max·sqrt(m̄·T·(1-γ)·κ) / (C2·sqrt(2·m̲·(1-γ^{T-1})))
/// ```
pub fn estimation_bound_rhs(cfg: &TheoryConfig, gamma: f64) -> Result<BoundBreakdown, TheoryError> {
    cfg.validate()?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(TheoryError::GammaOutOfRange(gamma));
    }
    let coeffs = nonlinearity_coeffs(cfg.tau, cfg.feature_bound, cfg.param_radius);
    let t = cfg.horizon as f64;
    let n = cfg.n as f64;
    let d = cfg.d as f64;

    let learning_term = 2.0 * cfg.lambda.sqrt() * cfg.param_radius
        + (2.0 * cfg.c1 / (cfg.tau * coeffs.c_sigma)) * ((d + (1.0 / cfg.delta).ln()) / n).sqrt();
    let tracking_term = (16.0 * cfg.feature_bound * coeffs.ratio * cfg.m_upper
        / (t * (1.0 - gamma).powf(1.5)))
        * (d * cfg.m_upper / n).sqrt()
        * cfg.variation_budget;
    let regret_prefactor = cfg.r_max * (cfg.m_upper * t * (1.0 - gamma) * cfg.kappa).sqrt()
        / (cfg.c2 * (2.0 * cfg.m_lower * (1.0 - gamma.powf(t - 1.0))).sqrt());
    Ok(BoundBreakdown {
        learning_term,
        tracking_term,
        regret_prefactor,
        regret_bound: regret_prefactor * (learning_term + tracking_term),
    })
}

/// Mean of σ' along the segment between the logits of two parameters:
/// `α = ∫_0^1 σ'((1-v)·z_a + v·z_b) dv`, by Gauss-Legendre quadrature of the
/// given order on [0, 1].
fn alpha_quadrature(z_a: f64, z_b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    nodes
        .iter()
        .zip(weights)
        .map(|(&v, &w)| w * sigmoid_derivative((1.0 - v) * z_a + v * z_b))
        .sum()
}

/// Closed form of the same mean value, `(σ(z_b) - σ(z_a)) / (z_b - z_a)`;
/// the independent route used to confirm the quadrature.
pub fn alpha_closed_form(z_a: f64, z_b: f64) -> f64 {
    if z_a == z_b {
        sigmoid_derivative(z_a)
    } else {
        (sigmoid(z_b) - sigmoid(z_a)) / (z_b - z_a)
    }
}

/// Outcome of the curvature-matrix domination check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvatureCheck {
    /// Minimum eigenvalue of `G - c_σ·(Σ̂ + λI)`.
    pub min_eig: f64,
    pub passes: bool,
}

/// Builds the curvature matrix
/// `G = (1/n)·Σ γ^{T-1-t_i}·α_i·φ̂_i φ̂_i' + λ·c_σ·I`, with `α_i` the mean of
/// σ' along the segment between `theta_a` and `theta_b` logits, and checks
/// the domination `G ⪰ c_σ·(Σ̂ + λI)` by its minimum eigenvalue.
pub fn gt_psd_check(
    theta_a: &DVector<f64>,
    theta_b: &DVector<f64>,
    data: &PreparedDataset,
    gamma: f64,
    tau: f64,
    lambda: f64,
    c_sigma: f64,
) -> Result<CurvatureCheck, TheoryError> {
    let d = data.dim();
    let (nodes33, weights33) = gauss_legendre_unit(33);
    let (nodes65, weights65) = gauss_legendre_unit(65);
    let weights = data.discount_weights(gamma);
    let norm = 1.0 / data.len() as f64;
    let shift_a = theta_a - data.theta_ref();
    let shift_b = theta_b - data.theta_ref();

    let mut g = DMatrix::zeros(d, d);
    for (diff, &w) in data.feature_diffs().iter().zip(&weights) {
        let z_a = tau * diff.dot(&shift_a);
        let z_b = tau * diff.dot(&shift_b);
        let alpha = alpha_quadrature(z_a, z_b, &nodes33, &weights33);
        let alpha_hi = alpha_quadrature(z_a, z_b, &nodes65, &weights65);
        if (alpha - alpha_hi).abs() > 1e-12 {
            return Err(TheoryError::QuadratureDisagreement((alpha - alpha_hi).abs()));
        }
        g.ger(norm * w * alpha, diff, diff, 1.0);
    }
    for i in 0..d {
        g[(i, i)] += lambda * c_sigma;
    }

    let mut dominated = sigma_hat(data, gamma)?.matrix * c_sigma;
    for i in 0..d {
        dominated[(i, i)] += lambda * c_sigma;
    }
    let min_eig = min_eigenvalue(&(g - dominated));
    Ok(CurvatureCheck {
        min_eig,
        passes: min_eig >= -1e-8,
    })
}

/// Settings of the learning/tracking error decomposition.
#[derive(Debug, Clone)]
pub struct DecompositionConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub tau: f64,
    pub c_sigma: f64,
    /// Replace observed labels by their model probabilities, zeroing the
    /// noise residuals; a diagnostic mode isolating the tracking term.
    pub noiseless_labels: bool,
}

/// Empirical values of the two estimation-error components.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    /// Finite-sample/noise part: `(2/(τ²c_σ))·||(1/n)·Σ τγ^{T-1-t_i}·ε_i·φ̂_i
    /// - λc_στ²·θ*_T||` in the `(Σ̂+λI)^{-1}` norm, with noise residuals
    /// `ε_i = o_i - σ(τ<φ̂_i, θ*_{t_i} - θ_ref>)`.
    pub learning: f64,
    /// Drift-induced part: the same norm of the weighted sigmoid gaps
    /// between each step's parameter and the final one.
    pub tracking: f64,
}

/// Computes both error components exactly from the data and the known
/// per-step drift parameters.
pub fn error_decomposition(
    schedule: &DriftSchedule,
    data: &PreparedDataset,
    cfg: &DecompositionConfig,
) -> Result<ErrorDecomposition, TheoryError> {
    if !(cfg.c_sigma > 0.0 && cfg.tau > 0.0) {
        return Err(TheoryError::InvalidInput(
            "tau and c_sigma must be positive".into(),
        ));
    }
    if cfg.lambda < 0.0 {
        return Err(TheoryError::InvalidInput(
            "lambda must be nonnegative".into(),
        ));
    }
    let d = data.dim();
    let theta_star_final = schedule.param_at_step(schedule.horizon())?;
    let shift_final = &theta_star_final - data.theta_ref();
    let weights = data.discount_weights(cfg.gamma);
    let norm = 1.0 / data.len() as f64;

    let mut learn_vec = DVector::zeros(d);
    let mut track_vec = DVector::zeros(d);
    for (((diff, &t), &label), &w) in data
        .feature_diffs()
        .iter()
        .zip(data.steps())
        .zip(data.labels())
        .zip(&weights)
    {
        let theta_star_t = schedule.param_at_step(t)?;
        let p_t = sigmoid(cfg.tau * diff.dot(&(&theta_star_t - data.theta_ref())));
        let p_final = sigmoid(cfg.tau * diff.dot(&shift_final));
        let observed = if cfg.noiseless_labels { p_t } else { label };
        let epsilon = observed - p_t;
        learn_vec.axpy(norm * cfg.tau * w * epsilon, diff, 1.0);
        track_vec.axpy(norm * cfg.tau * w * (p_t - p_final), diff, 1.0);
    }
    learn_vec.axpy(
        -cfg.lambda * cfg.c_sigma * cfg.tau * cfg.tau,
        &theta_star_final,
        1.0,
    );

    let mut m = sigma_hat(data, cfg.gamma)?.matrix;
    for i in 0..d {
        m[(i, i)] += cfg.lambda;
    }
    let scale = 2.0 / (cfg.tau * cfg.tau * cfg.c_sigma);
    let learning =
        scale * inverse_quadratic_norm(&learn_vec, &m).ok_or(TheoryError::SingularNorm)?;
    let tracking =
        scale * inverse_quadratic_norm(&track_vec, &m).ok_or(TheoryError::SingularNorm)?;
    Ok(ErrorDecomposition { learning, tracking })
}
