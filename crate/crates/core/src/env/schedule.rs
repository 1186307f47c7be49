//! Piecewise drift schedules for the optimal parameter `θ*_t` over `[1, T]`.
//!
//! A schedule is a list of segments tiling the integer steps `1..=T`. Each
//! segment is either constant or a circular interpolation that rotates every
//! interleaved `(cos, sin)` coordinate pair from a start to an end parameter.
//! The coordinate-sum identifiability constraint (`1' θ*_t = 0`) is not
//! enforced; the default schedule below does not satisfy it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::types::EnvError;

/// Shape of one schedule segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SegmentShape {
    /// The parameter held fixed over the segment.
    Constant { theta: DVector<f64> },
    /// Rotation of each coordinate pair from `start` to `end`. The fraction
    /// travelled at time `t` is `(t - anchor_lo) / (anchor_hi - anchor_lo)`,
    /// so a segment can be anchored at the last step of its predecessor to
    /// begin moving on its own first step.
    Arc {
        start: DVector<f64>,
        end: DVector<f64>,
        anchor_lo: f64,
        anchor_hi: f64,
    },
}

/// A segment owning the integer steps `t_lo..=t_hi`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub t_lo: u32,
    pub t_hi: u32,
    pub shape: SegmentShape,
}

impl Segment {
    fn dim(&self) -> usize {
        match &self.shape {
            SegmentShape::Constant { theta } => theta.len(),
            SegmentShape::Arc { start, .. } => start.len(),
        }
    }

    fn value_at(&self, t: f64) -> DVector<f64> {
        match &self.shape {
            SegmentShape::Constant { theta } => theta.clone(),
            SegmentShape::Arc {
                start,
                end,
                anchor_lo,
                anchor_hi,
            } => {
                let u = ((t - anchor_lo) / (anchor_hi - anchor_lo)).clamp(0.0, 1.0);
                circular_interpolate(start, end, u)
            }
        }
    }

    /// Parameter values at the segment ends; the norm over an arc is maximal
    /// at an endpoint because each pair radius is linear in the fraction.
    fn endpoint_values(&self) -> Vec<DVector<f64>> {
        match &self.shape {
            SegmentShape::Constant { theta } => vec![theta.clone()],
            SegmentShape::Arc { start, end, .. } => vec![start.clone(), end.clone()],
        }
    }
}

/// Rotate every `(2k, 2k+1)` pair of `start` towards `end` by the fraction
/// `u` of the (shortest) angular difference, with linearly interpolated radii.
fn circular_interpolate(start: &DVector<f64>, end: &DVector<f64>, u: f64) -> DVector<f64> {
    let mut out = DVector::zeros(start.len());
    for k in 0..start.len() / 2 {
        let (s0, s1) = (start[2 * k], start[2 * k + 1]);
        let (e0, e1) = (end[2 * k], end[2 * k + 1]);
        let r0 = s0.hypot(s1);
        let r1 = e0.hypot(e1);
        let a0 = s1.atan2(s0);
        let a1 = e1.atan2(e0);
        let mut da = a1 - a0;
        if da > std::f64::consts::PI {
            da -= 2.0 * std::f64::consts::PI;
        } else if da < -std::f64::consts::PI {
            da += 2.0 * std::f64::consts::PI;
        }
        let r = (1.0 - u) * r0 + u * r1;
        let angle = a0 + u * da;
        out[2 * k] = r * angle.cos();
        out[2 * k + 1] = r * angle.sin();
    }
    out
}

/// A drift schedule: the optimal parameter as a function of the time step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftSchedule {
    segments: Vec<Segment>,
    horizon: u32,
    dim: usize,
}

impl DriftSchedule {
    pub fn from_segments(segments: Vec<Segment>, horizon: u32) -> Result<Self, EnvError> {
        if horizon < 2 {
            return Err(EnvError::HorizonTooShort(horizon));
        }
        if segments.is_empty() {
            return Err(EnvError::BadSegments("no segments".into()));
        }
        let dim = segments[0].dim();
        if dim == 0 {
            return Err(EnvError::BadSegments("zero-dimensional parameter".into()));
        }
        let mut expected_lo = 1u32;
        for (i, seg) in segments.iter().enumerate() {
            if seg.dim() != dim {
                return Err(EnvError::DimensionMismatch {
                    got: seg.dim(),
                    expected: dim,
                });
            }
            if let SegmentShape::Arc {
                start,
                end,
                anchor_lo,
                anchor_hi,
            } = &seg.shape
            {
                if dim % 2 != 0 {
                    return Err(EnvError::BadSegments(
                        "circular segments need an even parameter dimension".into(),
                    ));
                }
                if end.len() != start.len() {
                    return Err(EnvError::DimensionMismatch {
                        got: end.len(),
                        expected: start.len(),
                    });
                }
                if !(anchor_hi > anchor_lo) {
                    return Err(EnvError::BadSegments(format!(
                        "segment {i}: anchors [{anchor_lo}, {anchor_hi}] are not increasing"
                    )));
                }
            }
            if seg.t_lo != expected_lo || seg.t_hi < seg.t_lo {
                return Err(EnvError::BadSegments(format!(
                    "segment {i} covers [{}, {}], expected to start at {expected_lo}",
                    seg.t_lo, seg.t_hi
                )));
            }
            expected_lo = seg.t_hi + 1;
        }
        if expected_lo != horizon + 1 {
            return Err(EnvError::BadSegments(format!(
                "segments end at {} but the horizon is {horizon}",
                expected_lo - 1
            )));
        }
        Ok(Self {
            segments,
            horizon,
            dim,
        })
    }

    /// A constant schedule: no drift over the whole horizon.
    pub fn constant(theta: DVector<f64>, horizon: u32) -> Result<Self, EnvError> {
        Self::from_segments(
            vec![Segment {
                t_lo: 1,
                t_hi: horizon,
                shape: SegmentShape::Constant { theta },
            }],
            horizon,
        )
    }

    /// The default drifting schedule over `T = 101`: the parameter holds the
    /// cos-aligned pattern `(1, 0, 1, 0, ...)` through `t = 33`, rotates a
    /// quarter circle per coordinate pair over `34 <= t <= 66`, and holds the
    /// sin-aligned pattern `(0, 1, 0, 1, ...)` from `t = 67` on.
    pub fn circular_default(d_x: usize) -> Self {
        Self::circular_with_breaks(d_x, 101, 33, 66).expect("default breakpoints are valid")
    }

    /// Quarter-circle drift with configurable horizon and breakpoints: the
    /// rotation spans steps `drift_start + 1 ..= drift_end`.
    pub fn circular_with_breaks(
        d_x: usize,
        horizon: u32,
        drift_start: u32,
        drift_end: u32,
    ) -> Result<Self, EnvError> {
        if d_x == 0 {
            return Err(EnvError::BadSegments("d_x must be >= 1".into()));
        }
        if !(1 <= drift_start && drift_start < drift_end && drift_end < horizon) {
            return Err(EnvError::BadSegments(format!(
                "breakpoints ({drift_start}, {drift_end}) must satisfy 1 <= start < end < T = {horizon}"
            )));
        }
        let d = 2 * d_x;
        let mut cos_aligned = DVector::zeros(d);
        let mut sin_aligned = DVector::zeros(d);
        for k in 0..d_x {
            cos_aligned[2 * k] = 1.0;
            sin_aligned[2 * k + 1] = 1.0;
        }
        Self::from_segments(
            vec![
                Segment {
                    t_lo: 1,
                    t_hi: drift_start,
                    shape: SegmentShape::Constant {
                        theta: cos_aligned.clone(),
                    },
                },
                Segment {
                    t_lo: drift_start + 1,
                    t_hi: drift_end,
                    shape: SegmentShape::Arc {
                        start: cos_aligned,
                        end: sin_aligned.clone(),
                        anchor_lo: drift_start as f64,
                        anchor_hi: drift_end as f64,
                    },
                },
                Segment {
                    t_lo: drift_end + 1,
                    t_hi: horizon,
                    shape: SegmentShape::Constant { theta: sin_aligned },
                },
            ],
            horizon,
        )
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The optimal parameter at (possibly fractional) time `t` in `[1, T]`.
    pub fn param_at(&self, t: f64) -> Result<DVector<f64>, EnvError> {
        if !(1.0..=self.horizon as f64).contains(&t) {
            return Err(EnvError::TimeOutOfRange {
                t,
                lo: 1.0,
                hi: self.horizon as f64,
            });
        }
        let seg = self
            .segments
            .iter()
            .find(|s| t <= s.t_hi as f64)
            .unwrap_or_else(|| self.segments.last().expect("validated non-empty"));
        Ok(seg.value_at(t))
    }

    /// The parameter at an integer step; convenience wrapper around
    /// [`Self::param_at`].
    pub fn param_at_step(&self, t: u32) -> Result<DVector<f64>, EnvError> {
        self.param_at(t as f64)
    }

    /// Largest parameter norm emitted over the schedule.
    pub fn max_param_norm(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.endpoint_values())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Checks that every emitted parameter stays inside the ball of the given
    /// radius.
    pub fn check_radius(&self, radius_w: f64) -> Result<(), EnvError> {
        for t in 1..=self.horizon {
            let norm = self.param_at_step(t)?.norm();
            if norm > radius_w + 1e-12 {
                return Err(EnvError::ScheduleOutsideBall {
                    t,
                    norm,
                    radius: radius_w,
                });
            }
        }
        Ok(())
    }

    /// Short human-readable summary for manifests and dataset headers.
    pub fn descriptor(&self) -> String {
        let kinds: Vec<String> = self
            .segments
            .iter()
            .map(|s| match &s.shape {
                SegmentShape::Constant { .. } => format!("const[{},{}]", s.t_lo, s.t_hi),
                SegmentShape::Arc { .. } => format!("arc[{},{}]", s.t_lo, s.t_hi),
            })
            .collect();
        format!("d={} T={} {}", self.dim, self.horizon, kinds.join("+"))
    }
}
