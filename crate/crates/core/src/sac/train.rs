//! Training loop coupling the agent to the cache environment.

use log::{debug, info};
use serde::Serialize;

use super::agent::{ActionMode, LossReport, SacAgent, TrainConfig};
use super::policy::AgentPolicy;
use super::replay::{ReplayBuffer, Transition};
use crate::cache::{Action, CacheEnv};
use crate::error::{Error, Result};
use crate::metrics::{run_policy, CacheConfig};
use crate::rng::{SimRng, STREAM_REPLAY};
use crate::workload::{generate_trace, PopularityModel, RequestTrace, ShiftSchedule};

/// Everything the trainer needs to build environments and traces.
#[derive(Clone, Debug)]
pub struct TrainWorld {
    pub model: PopularityModel,
    pub schedule: ShiftSchedule,
    pub cache: CacheConfig,
    /// Total training requests.
    pub train_steps: usize,
    /// Requests per episode; one greedy evaluation follows each episode.
    pub episode_length: usize,
    /// Length of the stationary evaluation trace.
    pub eval_steps: usize,
    pub eval_seed: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub eval_step: u64,
    pub greedy_hit_ratio: f64,
    pub mean_entropy: f64,
}

pub struct TrainOutcome {
    pub agent: SacAgent,
    pub curve: Vec<CurvePoint>,
    pub losses: Vec<LossReport>,
}

impl TrainWorld {
    pub fn validate(&self) -> Result<()> {
        if self.cache.capacity > self.model.catalog_size() {
            return Err(Error::config("cache_capacity", "C must not exceed M"));
        }
        if self.train_steps == 0 {
            return Err(Error::config("train_steps", "must be >= 1"));
        }
        if self.episode_length == 0 {
            return Err(Error::config("episode_length", "must be >= 1"));
        }
        if self.eval_steps < self.cache.window {
            return Err(Error::config("eval_steps", "must be >= the window size L"));
        }
        self.schedule.validate_for(self.model.catalog_size())
    }

    pub fn eval_trace(&self) -> Result<RequestTrace> {
        generate_trace(&self.model, &ShiftSchedule::empty(), self.eval_steps, self.eval_seed)
    }
}

/// Greedy evaluation from an empty cache: mean windowed hit ratio over the
/// second half of the trace, and the mean policy entropy.
pub fn evaluate_greedy(agent: &SacAgent, world: &TrainWorld, trace: &RequestTrace) -> Result<(f64, f64)> {
    let mut policy = AgentPolicy::greedy(&agent.params);
    let run = run_policy(&mut policy, &trace.requests, &world.cache, world.eval_seed)?;
    Ok((run.steady_hit_ratio()?, policy.mean_entropy()))
}

/// Train an agent on a single continuing request stream.
///
/// Episodes only mark evaluation points; the cache carries over and every
/// transition is stored with `done = false`. The agent acts only on misses
/// with a full cache, and each stored transition triggers
/// `updates_per_step` updates once the buffer holds `warmup_steps` entries.
pub fn train(world: &TrainWorld, config: &TrainConfig) -> Result<TrainOutcome> {
    world.validate()?;
    config.validate()?;
    let mut agent = SacAgent::new(world.cache.capacity, config.clone())?;
    let mut buffer = ReplayBuffer::new(
        config.buffer_capacity,
        SimRng::with_stream(config.seed, STREAM_REPLAY),
    )?;
    let trace = generate_trace(&world.model, &world.schedule, world.train_steps, config.seed)?;
    let eval_trace = world.eval_trace()?;
    let mut env = CacheEnv::new(
        world.cache.capacity,
        world.cache.window,
        world.cache.latency,
        config.seed,
    )?;

    let mut curve = Vec::new();
    let mut losses = Vec::new();
    let mut pending: Option<(Vec<f64>, Action)> = None;
    for (step, &requested) in trace.requests.iter().enumerate() {
        let mut failure = None;
        let outcome = env.step(requested, |d| {
            if let Some(k) = d.cache.first_empty() {
                return Action::replace(k);
            }
            match agent.select_action(d.state.as_slice(), ActionMode::Sample) {
                Ok(a) => {
                    pending = Some((d.state.0.clone(), a));
                    a
                }
                Err(e) => {
                    failure = Some(e);
                    Action::KEEP
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        if let Some((state, action)) = pending.take() {
            buffer.push(Transition {
                state,
                action: action.index(),
                reward: outcome.reward,
                next_state: outcome.next_state.0,
                done: false,
            });
            if buffer.len() >= config.warmup_steps.max(1) {
                for _ in 0..config.updates_per_step {
                    let batch = buffer.sample(config.batch_size)?;
                    losses.push(agent.update(&batch)?);
                }
            }
        }

        let done_steps = step + 1;
        if done_steps % world.episode_length == 0 || done_steps == world.train_steps {
            let (hit_ratio, entropy) = evaluate_greedy(&agent, world, &eval_trace)?;
            info!(
                "step {done_steps}: greedy hit ratio {hit_ratio:.4}, entropy {entropy:.3}, \
                 alpha {:.4}, buffer {}",
                agent.params.alpha(),
                buffer.len()
            );
            if let Some(last) = losses.last() {
                debug!("last losses {last:?}");
            }
            curve.push(CurvePoint {
                eval_step: done_steps as u64,
                greedy_hit_ratio: hit_ratio,
                mean_entropy: entropy,
            });
        }
    }
    Ok(TrainOutcome {
        agent,
        curve,
        losses,
    })
}

/// Write the training curve as `eval_step,greedy_hit_ratio,mean_entropy`.
pub fn write_curve<W: std::io::Write>(curve: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["eval_step", "greedy_hit_ratio", "mean_entropy"])?;
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
