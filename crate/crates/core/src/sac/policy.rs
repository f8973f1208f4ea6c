use crate::cache::{Action, Decision};
use crate::policies::{Policy, PolicyKind};
use crate::rng::SimRng;

use super::agent::{entropy, greedy_index, ActionMode, AgentParams};

/// Adapts trained parameters to the [`Policy`] interface.
///
/// Empty slots are filled before the actor is consulted, matching the
/// baselines' cold-start rule.
pub struct AgentPolicy<'a> {
    params: &'a AgentParams,
    mode: ActionMode,
    rng: SimRng,
    entropy_sum: f64,
    decisions: u64,
}

impl<'a> AgentPolicy<'a> {
    pub fn new(params: &'a AgentParams, mode: ActionMode, rng: SimRng) -> Self {
        AgentPolicy {
            params,
            mode,
            rng,
            entropy_sum: 0.0,
            decisions: 0,
        }
    }

    pub fn greedy(params: &'a AgentParams) -> Self {
        Self::new(params, ActionMode::Greedy, SimRng::new(0))
    }

    /// Mean policy entropy over the decisions the actor made.
    pub fn mean_entropy(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.entropy_sum / self.decisions as f64
        }
    }

    pub fn decisions(&self) -> u64 {
        self.decisions
    }
}

impl Policy for AgentPolicy<'_> {
    fn kind(&self) -> PolicyKind {
        PolicyKind::RlAgent
    }

    fn decide(&mut self, d: &Decision<'_>) -> Action {
        if let Some(k) = d.cache.first_empty() {
            return Action::replace(k);
        }
        let probs = self
            .params
            .action_probs(d.state.as_slice())
            .expect("state length is 2C for a validated agent");
        self.entropy_sum += entropy(&probs);
        self.decisions += 1;
        Action(match self.mode {
            ActionMode::Greedy => greedy_index(&probs),
            ActionMode::Sample => self.rng.categorical(&probs),
        })
    }
}
