//! Evaluation quantities: discounted covariance matrices, coverage condition
//! numbers, reward accuracy, Monte-Carlo expected regret and estimation-error
//! norms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    feature_map, Action, Context, DriftSchedule, EnvConfig, EnvError, TestPair,
};
use crate::numeric::{max_eigenvalue, mean_and_std_error, min_eigenvalue, quadratic_norm};
use crate::objectives::PreparedDataset;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(
        "reference policy covariance is not positive definite (lambda_min = {lambda_min:.3e}); \
         feature coverage fails"
    )]
    CoverageViolation { lambda_min: f64 },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Which covariance construction produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovKind {
    /// Discounted empirical covariance of feature differences.
    SigmaHat,
    /// Squared-discount empirical covariance.
    SigmaTilde,
    /// Population covariance of features under a policy.
    SigmaPi,
    /// Population covariance of feature differences under the reference.
    SigmaDiff,
    /// Discounted population covariance of feature differences.
    SigmaGammaDiff,
}

/// A symmetric positive semidefinite d×d matrix tagged with its construction.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    pub kind: CovKind,
    pub matrix: DMatrix<f64>,
}

impl CovMatrix {
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        max_eigenvalue(&self.matrix)
    }

    /// Symmetry and PSD checks at the stated tolerances.
    pub fn is_symmetric_psd(&self) -> bool {
        let m = &self.matrix;
        let mut asym: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        asym <= 1e-12 && self.min_eigenvalue() >= -1e-10
    }
}

fn check_gamma(gamma: f64) -> Result<(), MetricsError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(MetricsError::InvalidInput(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    Ok(())
}

/// Discounted covariance of the offline dataset:
/// `Σ̂ = (1/n)·Σ γ^{T-t_i-1} φ̂_i φ̂_i'`.
pub fn sigma_hat(data: &PreparedDataset, gamma: f64) -> Result<CovMatrix, MetricsError> {
    check_gamma(gamma)?;
    let mut m = DMatrix::zeros(data.dim(), data.dim());
    let norm = 1.0 / data.len() as f64;
    for (diff, w) in data.feature_diffs().iter().zip(data.discount_weights(gamma)) {
        m.ger(norm * w, diff, diff, 1.0);
    }
    Ok(CovMatrix {
        kind: CovKind::SigmaHat,
        matrix: m,
    })
}

/// Squared-discount covariance:
/// `Σ̃ = (1/n)·Σ γ^{2(T-t_i-1)} φ̂_i φ̂_i'`. Dominated by Σ̂ for γ <= 1.
pub fn sigma_tilde(data: &PreparedDataset, gamma: f64) -> Result<CovMatrix, MetricsError> {
    check_gamma(gamma)?;
    let mut m = DMatrix::zeros(data.dim(), data.dim());
    let norm = 1.0 / data.len() as f64;
    for (diff, w) in data.feature_diffs().iter().zip(data.discount_weights(gamma)) {
        m.ger(norm * w * w, diff, diff, 1.0);
    }
    Ok(CovMatrix {
        kind: CovKind::SigmaTilde,
        matrix: m,
    })
}

/// Monte-Carlo population covariance `E[φφ'] - E[φ]E[φ]'` of the features
/// under `x ~ U[0,1]^{d_x}`, `a ~ softmax(φ(x,·)'θ)`, with an injectable
/// feature map (tests rotate it to check spectral invariance).
pub fn population_covariance_with<F>(
    env: &EnvConfig,
    theta: &DVector<f64>,
    feature: F,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64>
where
    F: Fn(&Context, Action) -> DVector<f64>,
{
    let d = theta.len();
    let mut sum = DVector::zeros(d);
    let mut sum_outer = DMatrix::zeros(d, d);
    for _ in 0..n_mc {
        let coords: Vec<f64> = (0..env.d_x).map(|_| rng.random::<f64>()).collect();
        let context = Context::new(coords).expect("uniform draws lie in [0, 1]");
        let feats: Vec<DVector<f64>> = (0..env.n_actions)
            .map(|a| feature(&context, Action(a)))
            .collect();
        let logits: Vec<f64> = feats.iter().map(|phi| phi.dot(theta)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut idx = 0;
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                idx = i;
                break;
            }
        }
        let phi = &feats[idx];
        sum += phi;
        sum_outer.ger(1.0, phi, phi, 1.0);
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let mut cov = sum_outer / n;
    cov.ger(-1.0, &mean, &mean, 1.0);
    cov
}

/// Population covariance of the environment's own feature map.
pub fn population_covariance(
    env: &EnvConfig,
    theta: &DVector<f64>,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> CovMatrix {
    CovMatrix {
        kind: CovKind::SigmaPi,
        matrix: population_covariance_with(env, theta, feature_map, n_mc, rng),
    }
}

/// Population covariance of feature differences `E[φ̂ φ̂']` with both actions
/// drawn independently from the softmax policy of `theta`.
pub fn sigma_diff_mc(
    env: &EnvConfig,
    theta: &DVector<f64>,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> CovMatrix {
    let m = diff_covariance_weighted(env, theta, None, n_mc, rng);
    CovMatrix {
        kind: CovKind::SigmaDiff,
        matrix: m,
    }
}

/// Discounted population covariance `E[γ^{T-1-t} φ̂ φ̂']` with
/// `t ~ U{1, .., T-1}` independent of the pair draw.
pub fn sigma_gamma_diff_mc(
    env: &EnvConfig,
    theta: &DVector<f64>,
    gamma: f64,
    horizon: u32,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CovMatrix, MetricsError> {
    check_gamma(gamma)?;
    if horizon < 2 {
        return Err(MetricsError::InvalidInput("horizon must be >= 2".into()));
    }
    let m = diff_covariance_weighted(env, theta, Some((gamma, horizon)), n_mc, rng);
    Ok(CovMatrix {
        kind: CovKind::SigmaGammaDiff,
        matrix: m,
    })
}

fn diff_covariance_weighted(
    env: &EnvConfig,
    theta: &DVector<f64>,
    discount: Option<(f64, u32)>,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let d = theta.len();
    let mut m = DMatrix::zeros(d, d);
    for _ in 0..n_mc {
        let coords: Vec<f64> = (0..env.d_x).map(|_| rng.random::<f64>()).collect();
        let context = Context::new(coords).expect("uniform draws lie in [0, 1]");
        let feats: Vec<DVector<f64>> = (0..env.n_actions)
            .map(|a| feature_map(&context, Action(a)))
            .collect();
        let logits: Vec<f64> = feats.iter().map(|phi| phi.dot(theta)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut draw = || {
            let mut u = rng.random::<f64>() * total;
            let mut idx = 0;
            for (i, w) in weights.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        };
        let a = draw();
        let b = draw();
        let diff = &feats[a] - &feats[b];
        let w = match discount {
            Some((gamma, horizon)) => {
                let t = rng.random_range(1..horizon);
                gamma.powi((horizon - 1 - t) as i32)
            }
            None => 1.0,
        };
        m.ger(w / n_mc as f64, &diff, &diff, 1.0);
    }
    m
}

/// Result of the condition-number estimate, with the ingredients needed to
/// check feature coverage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa: f64,
    pub lambda_max_pi: f64,
    pub lambda_min_ref: f64,
    pub n_mc: usize,
}

/// Estimates the coverage condition number
/// `κ_π = λ_max(Σ_π) / λ_min(Σ_ref)` by Monte Carlo. Errors when the
/// reference covariance is not positive definite (coverage failure).
pub fn condition_number_kappa(
    env: &EnvConfig,
    theta_pi: &DVector<f64>,
    theta_ref: &DVector<f64>,
    n_mc: usize,
    seed: u64,
) -> Result<KappaEstimate, MetricsError> {
    let d = env.feature_dim();
    if n_mc < 10 * d * d {
        return Err(MetricsError::InvalidInput(format!(
            "n_mc must be at least 10·d² = {}, got {n_mc}",
            10 * d * d
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(101);
    let sigma_pi = population_covariance(env, theta_pi, n_mc, &mut rng);
    rng.set_stream(102);
    let sigma_ref = population_covariance(env, theta_ref, n_mc, &mut rng);
    let lambda_min_ref = sigma_ref.min_eigenvalue();
    if lambda_min_ref <= 1e-12 {
        return Err(MetricsError::CoverageViolation {
            lambda_min: lambda_min_ref,
        });
    }
    let lambda_max_pi = sigma_pi.max_eigenvalue();
    Ok(KappaEstimate {
        kappa: lambda_max_pi / lambda_min_ref,
        lambda_max_pi,
        lambda_min_ref,
        n_mc,
    })
}

/// Upper bound on the ratio between the plain and discounted population
/// covariances of feature differences:
/// `ω̄(T, γ) <= m̄·(T-1)·(1-γ) / (m̲·(1-γ^{T-1}))`, with the γ -> 1 limit
/// `m̄ / m̲`.
pub fn omega_bar(horizon: u32, gamma: f64, m_lower: f64, m_upper: f64) -> Result<f64, MetricsError> {
    check_gamma(gamma)?;
    if horizon < 2 {
        return Err(MetricsError::InvalidInput("horizon must be >= 2".into()));
    }
    if !(m_lower > 0.0) || m_upper < m_lower {
        return Err(MetricsError::InvalidInput(
            "need 0 < m_lower <= m_upper".into(),
        ));
    }
    if gamma == 1.0 {
        return Ok(m_upper / m_lower);
    }
    let t1 = (horizon - 1) as f64;
    Ok(m_upper * t1 * (1.0 - gamma) / (m_lower * (1.0 - gamma.powf(t1))))
}

/// Fraction of test pairs whose implicit-reward sign matches the sign of the
/// true preference `p - 1/2`; exact ties on either side score half credit.
pub fn reward_accuracy(
    theta: &DVector<f64>,
    theta_ref: &DVector<f64>,
    test_set: &[TestPair],
    tau: f64,
) -> f64 {
    assert!(!test_set.is_empty(), "reward accuracy needs test pairs");
    let shifted = theta - theta_ref;
    let mut score = 0.0;
    for pair in test_set {
        let diff = crate::env::feature_diff(&pair.context, pair.a1, pair.a2);
        let h = tau * diff.dot(&shifted);
        let truth = pair.p_a1 - 0.5;
        score += if h == 0.0 || truth == 0.0 {
            0.5
        } else if (h > 0.0) == (truth > 0.0) {
            1.0
        } else {
            0.0
        };
    }
    score / test_set.len() as f64
}

/// Monte-Carlo estimate of an expected value with its standard error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegretEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_contexts: usize,
}

/// Expected raw-reward regret of the policy `θ̃` against the softmax-optimal
/// policy at the evaluation step: contexts are sampled, actions are summed
/// exactly. Both policies are scored on the same contexts (paired estimator).
pub fn expected_regret(
    theta_tilde: &DVector<f64>,
    schedule: &DriftSchedule,
    tau: f64,
    theta_ref: &DVector<f64>,
    env: &EnvConfig,
    n_contexts: usize,
    seed: u64,
) -> Result<RegretEstimate, MetricsError> {
    if n_contexts == 0 {
        return Err(MetricsError::InvalidInput("n_contexts must be >= 1".into()));
    }
    let theta_star = schedule.param_at_step(schedule.horizon())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let gaps: Vec<f64> = (0..n_contexts)
        .map(|_| {
            let coords: Vec<f64> = (0..env.d_x).map(|_| rng.random::<f64>()).collect();
            let context = Context::new(coords).expect("uniform draws lie in [0, 1]");
            per_context_regret(&context, theta_tilde, &theta_star, theta_ref, tau, env)
        })
        .collect();
    let (value, std_error) = mean_and_std_error(&gaps);
    Ok(RegretEstimate {
        value,
        std_error,
        n_contexts,
    })
}

/// Exact-over-actions regret of `θ̃` at one context: the reward gap between
/// the softmax policy of the drift parameter and that of `θ̃`, under the
/// reward `r(x, a) = τ·<φ(x,a), θ* - θ_ref>`.
pub fn per_context_regret(
    context: &Context,
    theta_tilde: &DVector<f64>,
    theta_star: &DVector<f64>,
    theta_ref: &DVector<f64>,
    tau: f64,
    env: &EnvConfig,
) -> f64 {
    let effective = theta_star - theta_ref;
    let feats: Vec<DVector<f64>> = (0..env.n_actions)
        .map(|a| feature_map(context, Action(a)))
        .collect();
    let rewards: Vec<f64> = feats.iter().map(|phi| tau * phi.dot(&effective)).collect();
    let softmax = |theta: &DVector<f64>| -> Vec<f64> {
        let logits: Vec<f64> = feats.iter().map(|phi| phi.dot(theta)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    };
    let p_star = softmax(theta_star);
    let p_tilde = softmax(theta_tilde);
    rewards
        .iter()
        .zip(p_star.iter().zip(&p_tilde))
        .map(|(r, (ps, pt))| (ps - pt) * r)
        .sum()
}

/// Estimation error `||θ̃ - θ*||_{Σ̂ + λI}` of a parameter against the drift
/// parameter, in the discounted-covariance norm of the dataset.
pub fn estimation_error(
    theta_tilde: &DVector<f64>,
    theta_star: &DVector<f64>,
    data: &PreparedDataset,
    gamma: f64,
    lambda: f64,
) -> Result<f64, MetricsError> {
    if lambda < 0.0 {
        return Err(MetricsError::InvalidInput(
            "lambda must be nonnegative".into(),
        ));
    }
    let mut m = sigma_hat(data, gamma)?.matrix;
    for i in 0..m.nrows() {
        m[(i, i)] += lambda;
    }
    let delta = theta_tilde - theta_star;
    Ok(quadratic_norm(&delta, &m))
}

/// A flat metric record for JSON emission.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run_id: String,
    pub metric: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}
