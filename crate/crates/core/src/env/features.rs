//! The deterministic feature embedding and the preference model built on it.
//!
//! Each context coordinate `x_k` contributes an interleaved pair
//! `((a+1)·cos(x_k·π), (1/(a+1))·sin(x_k·π))`, so features and policy
//! parameters both live in `d = 2·d_x` dimensions.

use nalgebra::DVector;
use std::f64::consts::PI;

use super::types::{Action, Context, FeatureVector};
use crate::numeric::sigmoid;

/// Feature embedding `phi(x, a)`.
pub fn feature_map(context: &Context, action: Action) -> FeatureVector {
    let scale = (action.0 + 1) as f64;
    let mut phi = DVector::zeros(2 * context.dim());
    for (k, &x) in context.coords().iter().enumerate() {
        let angle = x * PI;
        phi[2 * k] = scale * angle.cos();
        phi[2 * k + 1] = angle.sin() / scale;
    }
    phi
}

/// Upper bound `L` on `||phi(x, a)||_2` over all contexts and the action set.
///
/// Per coordinate pair, `((a+1)·cos)^2 + (sin/(a+1))^2 <= max(a+1, 1/(a+1))^2`,
/// and the scale is largest at the top action index.
pub fn feature_norm_bound(d_x: usize, n_actions: u32) -> f64 {
    let worst = (1..=n_actions)
        .map(|s| {
            let s = s as f64;
            s.max(1.0 / s)
        })
        .fold(0.0, f64::max);
    (d_x as f64).sqrt() * worst
}

/// Difference of feature embeddings, `phi(x, a1) - phi(x, a2)`.
pub fn feature_diff(context: &Context, a1: Action, a2: Action) -> FeatureVector {
    feature_map(context, a1) - feature_map(context, a2)
}

/// Probability that `a1` is preferred to `a2` under a Bradley-Terry model
/// with log-linear rewards:
/// `σ(τ · <phi(x, a1) - phi(x, a2), θ* - θ_ref>)`.
pub fn preference_probability(
    context: &Context,
    a1: Action,
    a2: Action,
    theta_star: &DVector<f64>,
    theta_ref: &DVector<f64>,
    tau: f64,
) -> f64 {
    let diff = feature_diff(context, a1, a2);
    let effective = theta_star - theta_ref;
    sigmoid(tau * diff.dot(&effective))
}

/// Softmax policy probabilities `π_θ(a | x) ∝ exp(phi(x, a)' θ)` over the
/// whole action set.
pub fn policy_probabilities(context: &Context, theta: &DVector<f64>, n_actions: u32) -> Vec<f64> {
    let logits: Vec<f64> = (0..n_actions)
        .map(|a| feature_map(context, Action(a)).dot(theta))
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
