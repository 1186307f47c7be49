//! Offline dataset generation under a drifting Bradley-Terry model.
//!
//! A single seed fans out to per-purpose substreams (contexts, action pairs,
//! labels, test set), so enlarging one draw category never perturbs the
//! others.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::preference_probability;
use super::schedule::DriftSchedule;
use super::types::{
    Action, Context, EnvConfig, EnvError, OfflineDataset, PreferenceDatapoint, TestPair,
};

const STREAM_CONTEXTS: u64 = 1;
const STREAM_ACTIONS: u64 = 2;
const STREAM_LABELS: u64 = 3;
const STREAM_TEST: u64 = 4;

/// Everything needed to sample a synthetic preference dataset.
#[derive(Debug, Clone)]
pub struct SampleConfig {
    pub env: EnvConfig,
    /// KL coefficient of the data-generating model.
    pub tau: f64,
    pub points_per_step: u32,
    pub n_test: u32,
    pub seed: u64,
    /// Reference parameter; `None` means the uniform policy (zeros).
    pub theta_ref: Option<DVector<f64>>,
}

impl SampleConfig {
    pub fn new(env: EnvConfig, tau: f64, points_per_step: u32, n_test: u32, seed: u64) -> Self {
        Self {
            env,
            tau,
            points_per_step,
            n_test,
            seed,
            theta_ref: None,
        }
    }

    fn resolved_theta_ref(&self) -> DVector<f64> {
        self.theta_ref
            .clone()
            .unwrap_or_else(|| DVector::zeros(self.env.feature_dim()))
    }
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_dims(schedule: &DriftSchedule, cfg: &SampleConfig) -> Result<(), EnvError> {
    if schedule.dim() != cfg.env.feature_dim() {
        return Err(EnvError::DimensionMismatch {
            got: schedule.dim(),
            expected: cfg.env.feature_dim(),
        });
    }
    if let Some(r) = &cfg.theta_ref {
        if r.len() != cfg.env.feature_dim() {
            return Err(EnvError::DimensionMismatch {
                got: r.len(),
                expected: cfg.env.feature_dim(),
            });
        }
    }
    if cfg.tau <= 0.0 {
        return Err(EnvError::InvalidConfig("tau must be positive".into()));
    }
    Ok(())
}

fn draw_context(rng: &mut ChaCha8Rng, d_x: usize) -> Context {
    let coords: Vec<f64> = (0..d_x).map(|_| rng.random::<f64>()).collect();
    Context::new(coords).expect("uniform draws lie in [0, 1]")
}

/// Two distinct actions drawn uniformly without replacement.
fn draw_action_pair(rng: &mut ChaCha8Rng, n_actions: u32) -> (Action, Action) {
    let first = rng.random_range(0..n_actions);
    let mut second = rng.random_range(0..n_actions - 1);
    if second >= first {
        second += 1;
    }
    (Action(first), Action(second))
}

/// Samples `points_per_step` preference datapoints for every training step
/// `t = 1, .., T - 1`. Pairs are stored winner-first with `label = 1`.
pub fn sample_dataset(
    schedule: &DriftSchedule,
    cfg: &SampleConfig,
) -> Result<OfflineDataset, EnvError> {
    check_dims(schedule, cfg)?;
    if cfg.points_per_step < 1 {
        return Err(EnvError::InvalidConfig(
            "points_per_step must be >= 1".into(),
        ));
    }
    let theta_ref = cfg.resolved_theta_ref();
    let mut ctx_rng = substream(cfg.seed, STREAM_CONTEXTS);
    let mut act_rng = substream(cfg.seed, STREAM_ACTIONS);
    let mut lab_rng = substream(cfg.seed, STREAM_LABELS);

    let horizon = schedule.horizon();
    let mut points = Vec::with_capacity(((horizon - 1) * cfg.points_per_step) as usize);
    for t in 1..horizon {
        let theta_star = schedule.param_at_step(t)?;
        for _ in 0..cfg.points_per_step {
            let context = draw_context(&mut ctx_rng, cfg.env.d_x);
            let (a1, a2) = draw_action_pair(&mut act_rng, cfg.env.n_actions);
            let p = preference_probability(&context, a1, a2, &theta_star, &theta_ref, cfg.tau);
            let first_won = lab_rng.random::<f64>() < p;
            let (winner, loser) = if first_won { (a1, a2) } else { (a2, a1) };
            points.push(PreferenceDatapoint::new(context, winner, loser, t, 1)?);
        }
    }
    OfflineDataset::new(points, horizon)
}

/// Samples `n_test` evaluation pairs at the final step `T`, carrying the
/// exact preference probability rather than a sampled label.
pub fn sample_test_set(
    schedule: &DriftSchedule,
    cfg: &SampleConfig,
) -> Result<Vec<TestPair>, EnvError> {
    check_dims(schedule, cfg)?;
    if cfg.n_test < 1 {
        return Err(EnvError::InvalidConfig("n_test must be >= 1".into()));
    }
    let theta_ref = cfg.resolved_theta_ref();
    let theta_star = schedule.param_at_step(schedule.horizon())?;
    let mut rng = substream(cfg.seed, STREAM_TEST);
    let mut rows = Vec::with_capacity(cfg.n_test as usize);
    for _ in 0..cfg.n_test {
        let context = draw_context(&mut rng, cfg.env.d_x);
        let (a1, a2) = draw_action_pair(&mut rng, cfg.env.n_actions);
        let p_a1 = preference_probability(&context, a1, a2, &theta_star, &theta_ref, cfg.tau);
        rows.push(TestPair {
            context,
            a1,
            a2,
            p_a1,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_cfg(seed: u64) -> SampleConfig {
        SampleConfig::new(EnvConfig::new(4, 16).unwrap(), 1.0, 20, 100, seed)
    }

    #[test]
    fn dataset_has_expected_size_and_coverage() {
        let sched = DriftSchedule::circular_default(4);
        let ds = sample_dataset(&sched, &default_cfg(0)).unwrap();
        assert_eq!(ds.len(), 2000);
        assert_eq!(ds.temporal_coverage(), (20, 20));
        assert!(ds.points().iter().all(|p| p.label == 1));
        assert!(ds.points().iter().all(|p| p.winner != p.loser));
    }

    #[test]
    fn same_seed_reproduces_identical_dataset() {
        let sched = DriftSchedule::circular_default(4);
        let a = sample_dataset(&sched, &default_cfg(42)).unwrap();
        let b = sample_dataset(&sched, &default_cfg(42)).unwrap();
        assert_eq!(a.points(), b.points());
        let c = sample_dataset(&sched, &default_cfg(43)).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn test_set_rows_carry_probabilities_in_open_interval() {
        let sched = DriftSchedule::circular_default(4);
        let rows = sample_test_set(&sched, &default_cfg(7)).unwrap();
        assert_eq!(rows.len(), 100);
        for row in &rows {
            assert_ne!(row.a1, row.a2);
            assert!(row.p_a1 > 0.0 && row.p_a1 < 1.0);
        }
    }

    #[test]
    fn test_sampling_does_not_perturb_training_stream() {
        let sched = DriftSchedule::circular_default(4);
        let mut cfg = default_cfg(5);
        let before = sample_dataset(&sched, &cfg).unwrap();
        cfg.n_test = 1000;
        let _ = sample_test_set(&sched, &cfg).unwrap();
        let after = sample_dataset(&sched, &cfg).unwrap();
        assert_eq!(before.points(), after.points());
    }

    #[test]
    fn empirical_label_frequency_tracks_model_probability() {
        // Fix one (x, a1, a2, t) and resample the label many times; the
        // winner-frequency of a1 must approach the model probability.
        let sched = DriftSchedule::circular_default(4);
        let cfg = default_cfg(11);
        let context = Context::new(vec![0.15, 0.4, 0.8, 0.66]).unwrap();
        let (a1, a2) = (Action(3), Action(12));
        let theta_star = sched.param_at_step(80).unwrap();
        let zeros = DVector::zeros(8);
        let p = preference_probability(&context, a1, a2, &theta_star, &zeros, cfg.tau);

        let mut rng = substream(999, STREAM_LABELS);
        let n = 200_000;
        let mut wins = 0u32;
        for _ in 0..n {
            if rng.random::<f64>() < p {
                wins += 1;
            }
        }
        let freq = wins as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (freq - p).abs() <= 3.0 * se,
            "freq {freq} vs p {p} (se {se})"
        );
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let sched = DriftSchedule::circular_default(3);
        assert!(matches!(
            sample_dataset(&sched, &default_cfg(0)),
            Err(EnvError::DimensionMismatch { .. })
        ));
    }
}
