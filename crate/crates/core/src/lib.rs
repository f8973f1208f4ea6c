//! Deterministic simulator and discrete soft actor-critic trainer for
//! reinforcement-learning-based edge caching.
//!
//! Requests for abstract content IDs arrive from a truncated Zipf popularity
//! model. On every miss a policy decides whether to keep the cache as is or to
//! overwrite one slot with the requested content. The RL state is the
//! log-encoded slot IDs plus their request counts in a sliding window, and the
//! reward is the windowed hit ratio.

pub mod cache;
pub mod config;
pub mod error;
pub mod metrics;
pub mod policies;
pub mod rng;
pub mod sac;
pub mod shift_demo;
pub mod workload;

pub use cache::{Action, CacheEnv, CacheState, LatencyModel, StateVector, StepOutcome};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use metrics::{evaluate, CacheConfig, KpiReport};
pub use policies::{Policy, PolicyKind};
pub use rng::SimRng;
pub use workload::{ContentId, PopularityModel, RequestTrace, Shift, ShiftEvent, ShiftSchedule};
