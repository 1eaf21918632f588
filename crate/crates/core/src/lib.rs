//! Rescale-invariant federated reinforcement learning for V2X resource allocation.
//!
//! The crate is organised bottom-up:
//!
//! * [`env`] simulates an urban V2X cell: mobility on a Manhattan street grid,
//!   large-scale and fast-fading channel gains, per-slot SINR and rate
//!   evaluation, payload bookkeeping and the shared reward.
//! * [`policy`] is a from-scratch ReLU MLP with a softmax head, exact
//!   log-probability gradients, the REINFORCE estimator and RMSprop.
//! * [`brio`] implements the backward rescale-invariant operation that
//!   normalises hidden weight columns without changing the network function.
//! * [`federation`] runs the federated training loop and its baselines.
//! * [`experiment`] holds metrics, delivery evaluation and parameter sweeps
//!   used by the `rifrl` binary.

pub mod brio;
pub mod config;
pub mod env;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod policy;
pub mod seed;

pub use config::{FederationConfig, LearningConfig, RunConfig, ScenarioConfig};
pub use error::{Error, Result};
