//! Synthetic drifting-preference environment: domain types, the feature
//! embedding, drift schedules and offline dataset generation.

mod features;
pub mod io;
mod sampling;
mod schedule;
mod types;

pub use features::{
    feature_diff, feature_map, feature_norm_bound, policy_probabilities, preference_probability,
};
pub use sampling::{sample_dataset, sample_test_set, SampleConfig};
pub use schedule::{DriftSchedule, Segment, SegmentShape};
pub use types::{
    Action, Context, EnvConfig, EnvError, FeatureVector, OfflineDataset, PolicyParams,
    PreferenceDatapoint, TestPair,
};
