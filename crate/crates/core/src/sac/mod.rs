//! Discrete soft actor-critic agent with hand-written backpropagation.

pub mod adam;
pub mod agent;
pub mod checkpoint;
pub mod mlp;
pub mod policy;
pub mod replay;
pub mod train;

pub use agent::{ActionMode, AgentParams, LossReport, SacAgent, TrainConfig};
pub use checkpoint::{load_agent, save_agent, Checkpoint};
pub use mlp::Mlp;
pub use policy::AgentPolicy;
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{evaluate_greedy, train, write_curve, CurvePoint, TrainOutcome, TrainWorld};
