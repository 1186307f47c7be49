//! Desk-scale laboratory for preference optimization under temporal drift.
//!
//! The crate implements, over log-linear policies:
//!
//! - a synthetic drifting-preference environment with a deterministic feature
//!   embedding and Bradley-Terry sampling ([`env`]);
//! - the discounted, stationary and sliding-window preference objectives as
//!   interchangeable strategies ([`objectives`]);
//! - deterministic full-batch training with gradient normalization and
//!   parameter projection onto the admissible ball ([`optimizer`]);
//! - evaluation quantities: discounted covariance matrices, condition
//!   numbers, reward accuracy and expected regret ([`metrics`]);
//! - the computable objects of the estimation-error analysis: non-linearity
//!   coefficients, variation budget, discount selection, bound terms and the
//!   learning/tracking decomposition ([`theory`]);
//! - recipes for building drifting preference datasets from user-supplied
//!   tabular preference data ([`dataset_tools`]).

pub mod dataset_tools;
pub mod env;
pub mod metrics;
pub mod numeric;
pub mod objectives;
pub mod optimizer;
pub mod theory;
