//! Domain types for the synthetic preference environment.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by environment types and operations.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("context must have at least one coordinate")]
    EmptyContext,
    #[error("context coordinate {index} = {value} is outside [0, 1]")]
    ContextOutOfRange { index: usize, value: f64 },
    #[error("action index {index} is outside [0, {n_actions})")]
    ActionOutOfRange { index: u32, n_actions: u32 },
    #[error("winner and loser must be distinct actions (both were {action})")]
    DegeneratePair { action: u32 },
    #[error("time step {t} is outside [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("horizon must be at least 2, got {0}")]
    HorizonTooShort(u32),
    #[error("drift schedule segments must tile [1, T]: {0}")]
    BadSegments(String),
    #[error("parameter dimension {got} does not match schedule dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("schedule parameter at t = {t} has norm {norm} exceeding the radius {radius}")]
    ScheduleOutsideBall { t: u32, norm: f64, radius: f64 },
    #[error("{0}")]
    InvalidConfig(String),
    #[error("dataset is malformed: {0}")]
    MalformedDataset(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// A prompt/context: a point of `[0, 1]^{d_x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    coords: DVector<f64>,
}

impl Context {
    pub fn new(coords: Vec<f64>) -> Result<Self, EnvError> {
        if coords.is_empty() {
            return Err(EnvError::EmptyContext);
        }
        for (index, &value) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(EnvError::ContextOutOfRange { index, value });
            }
        }
        Ok(Self {
            coords: DVector::from_vec(coords),
        })
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A response/action: an index into the finite action set `{0, .., n_a - 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action(pub u32);

impl Action {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Static description of the synthetic environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Context dimension `d_x`; features live in `d = 2 * d_x`.
    pub d_x: usize,
    /// Size of the action set; must be at least 2 so pairs exist.
    pub n_actions: u32,
}

impl EnvConfig {
    pub fn new(d_x: usize, n_actions: u32) -> Result<Self, EnvError> {
        if d_x == 0 {
            return Err(EnvError::InvalidConfig("d_x must be >= 1".into()));
        }
        if n_actions < 2 {
            return Err(EnvError::InvalidConfig("n_actions must be >= 2".into()));
        }
        Ok(Self { d_x, n_actions })
    }

    /// Feature (and parameter) dimension `d = 2 * d_x`.
    pub fn feature_dim(&self) -> usize {
        2 * self.d_x
    }

    pub fn check_action(&self, a: Action) -> Result<Action, EnvError> {
        if a.0 < self.n_actions {
            Ok(a)
        } else {
            Err(EnvError::ActionOutOfRange {
                index: a.0,
                n_actions: self.n_actions,
            })
        }
    }
}

/// A feature embedding `phi(x, a)`; its 2-norm is bounded by the constant
/// returned from [`crate::env::feature_norm_bound`].
pub type FeatureVector = DVector<f64>;

/// A policy parameter together with the radius of the admissible ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub theta: DVector<f64>,
    pub radius_w: f64,
}

impl PolicyParams {
    pub fn new(theta: DVector<f64>, radius_w: f64) -> Self {
        Self { theta, radius_w }
    }

    /// Whether the parameter lies inside the admissible ball.
    pub fn is_admissible(&self) -> bool {
        self.theta.norm() <= self.radius_w
    }

    /// Zero parameter of dimension `d` (the uniform reference policy).
    pub fn zeros(d: usize, radius_w: f64) -> Self {
        Self {
            theta: DVector::zeros(d),
            radius_w,
        }
    }
}

/// One preference observation. `winner`/`loser` are stored in preference
/// order when `label == 1`; a record with `label == 0` expresses that the
/// `loser` field was actually preferred (externally built datasets carry
/// both forms).
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDatapoint {
    pub context: Context,
    pub winner: Action,
    pub loser: Action,
    /// Observation time step; training data has `1 <= t <= T - 1`.
    pub t: u32,
    pub label: u8,
}

impl PreferenceDatapoint {
    pub fn new(
        context: Context,
        winner: Action,
        loser: Action,
        t: u32,
        label: u8,
    ) -> Result<Self, EnvError> {
        if winner == loser {
            return Err(EnvError::DegeneratePair { action: winner.0 });
        }
        if label > 1 {
            return Err(EnvError::MalformedDataset(format!(
                "label must be 0 or 1, got {label}"
            )));
        }
        Ok(Self {
            context,
            winner,
            loser,
            t,
            label,
        })
    }
}

/// An offline preference dataset over the horizon `[1, T - 1]`, sorted by
/// time step.
#[derive(Debug, Clone)]
pub struct OfflineDataset {
    points: Vec<PreferenceDatapoint>,
    horizon: u32,
}

impl OfflineDataset {
    pub fn new(mut points: Vec<PreferenceDatapoint>, horizon: u32) -> Result<Self, EnvError> {
        if horizon < 2 {
            return Err(EnvError::HorizonTooShort(horizon));
        }
        for p in &points {
            if p.t < 1 || p.t > horizon - 1 {
                return Err(EnvError::TimeOutOfRange {
                    t: p.t as f64,
                    lo: 1.0,
                    hi: (horizon - 1) as f64,
                });
            }
        }
        points.sort_by_key(|p| p.t);
        Ok(Self { points, horizon })
    }

    pub fn points(&self) -> &[PreferenceDatapoint] {
        &self.points
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of datapoints at each step `t = 1, .., T - 1`.
    pub fn per_step_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; (self.horizon - 1) as usize];
        for p in &self.points {
            counts[(p.t - 1) as usize] += 1;
        }
        counts
    }

    /// `(m_lower, m_upper)` = min/max datapoints over the steps of `[1, T-1]`.
    pub fn temporal_coverage(&self) -> (u32, u32) {
        let counts = self.per_step_counts();
        let lo = counts.iter().copied().min().unwrap_or(0);
        let hi = counts.iter().copied().max().unwrap_or(0);
        (lo, hi)
    }
}

/// A held-out evaluation pair carrying the exact preference probability of
/// the first action under the drift parameter at the evaluation step.
#[derive(Debug, Clone)]
pub struct TestPair {
    pub context: Context,
    pub a1: Action,
    pub a2: Action,
    /// True probability that `a1` is preferred to `a2` at the evaluation step.
    pub p_a1: f64,
}
