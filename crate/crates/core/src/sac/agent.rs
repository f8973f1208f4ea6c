//! Discrete soft actor-critic: softmax actor over the `C + 1` actions, twin
//! critics with Polyak-averaged targets, and a learned entropy temperature.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::Adam;
use super::mlp::{Gradients, Mlp};
use super::replay::Batch;
use crate::cache::Action;
use crate::error::{Error, Result};
use crate::rng::{SimRng, STREAM_ACTIONS, STREAM_INIT};

/// Hyperparameters of the trainer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    /// `None` means `0.5 * ln(C + 1)`.
    pub target_entropy: Option<f64>,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.95,
            tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            batch_size: 64,
            buffer_capacity: 50_000,
            warmup_steps: 1_000,
            updates_per_step: 1,
            target_entropy: None,
            hidden_sizes: vec![64, 64],
            seed: 0,
        }
    }
}

/// Fraction of the maximum policy entropy used as the default target.
pub const TARGET_ENTROPY_FRACTION: f64 = 0.5;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_alpha", self.lr_alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be a positive number"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma", "must be in (0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("tau", "must be in (0, 1]"));
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("updates_per_step", self.updates_per_step),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::config("hidden_sizes", "needs at least one positive size"));
        }
        if let Some(t) = self.target_entropy {
            if !t.is_finite() {
                return Err(Error::config("target_entropy", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn target_entropy_for(&self, n_actions: usize) -> f64 {
        self.target_entropy
            .unwrap_or(TARGET_ENTROPY_FRACTION * (n_actions as f64).ln())
    }

    /// SHA-256 over the capacity and the serialized config.
    pub fn hash(&self, capacity: usize) -> String {
        let body = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(format!("C={capacity};{body}").as_bytes());
        hex::encode(digest)
    }
}

/// Network parameters and the entropy temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentParams {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub log_alpha: f64,
}

impl AgentParams {
    /// Fresh parameters for a cache of `capacity` slots. The actor's output
    /// layer is zero so the initial policy is uniform; targets copy critics.
    pub fn new(capacity: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![2 * capacity];
        sizes.extend_from_slice(hidden);
        sizes.push(capacity + 1);
        let mut rng = SimRng::with_stream(seed, STREAM_INIT);
        let actor = Mlp::new(&sizes, true, &mut rng)?;
        let critic1 = Mlp::new(&sizes, false, &mut rng)?;
        let critic2 = Mlp::new(&sizes, false, &mut rng)?;
        Ok(AgentParams {
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            log_alpha: 0.0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.actor.output_dim() - 1
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn networks(&self) -> [(&'static str, &Mlp); 5] {
        [
            ("actor", &self.actor),
            ("critic1", &self.critic1),
            ("critic2", &self.critic2),
            ("target1", &self.target1),
            ("target2", &self.target2),
        ]
    }

    /// Checks the invariants: every network maps `2C` to `C + 1`, targets
    /// mirror critics, and alpha is finite.
    pub fn validate(&self) -> Result<()> {
        let c = self.capacity();
        for (name, net) in self.networks() {
            if net.input_dim() != 2 * c || net.output_dim() != c + 1 {
                return Err(Error::Shape(format!("{name} does not map 2C -> C+1")));
            }
        }
        if !self.critic1.same_shape(&self.target1) || !self.critic2.same_shape(&self.target2) {
            return Err(Error::Shape("targets differ in shape from critics".into()));
        }
        if !self.log_alpha.is_finite() {
            return Err(Error::Shape("log_alpha is not finite".into()));
        }
        Ok(())
    }

    pub fn action_probs(&self, state: &[f64]) -> Result<Vec<f64>> {
        actor_forward(&self.actor, state)
    }

    pub fn greedy_action(&self, state: &[f64]) -> Result<Action> {
        Ok(Action(greedy_index(&self.action_probs(state)?)))
    }
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|x| x - lse);
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_state(net: &Mlp, state: &[f64]) -> Result<()> {
    if state.len() != net.input_dim() {
        return Err(Error::Shape(format!(
            "state has length {}, expected {}",
            state.len(),
            net.input_dim()
        )));
    }
    Ok(())
}

/// Policy distribution over the `C + 1` actions.
pub fn actor_forward(actor: &Mlp, state: &[f64]) -> Result<Vec<f64>> {
    check_state(actor, state)?;
    Ok(softmax(&actor.forward_one(state)?))
}

/// Action values for all `C + 1` actions.
pub fn critic_forward(critic: &Mlp, state: &[f64]) -> Result<Vec<f64>> {
    check_state(critic, state)?;
    critic.forward_one(state)
}

/// Argmax with ties to the lowest index.
pub fn greedy_index(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Soft Bellman backup for one transition:
/// `r + gamma (1 - done) sum_a pi(a) (min(Q1, Q2)(a) - alpha log pi(a))`.
/// Zero-probability actions contribute nothing.
#[allow(clippy::too_many_arguments)]
pub fn soft_backup(
    reward: f64,
    done: bool,
    gamma: f64,
    probs: &[f64],
    log_probs: &[f64],
    q1: &[f64],
    q2: &[f64],
    alpha: f64,
) -> f64 {
    if done {
        return reward;
    }
    let soft_value: f64 = probs
        .iter()
        .zip(log_probs)
        .zip(q1.iter().zip(q2))
        .filter(|((&p, _), _)| p > 0.0)
        .map(|((&p, &lp), (&a, &b))| p * (a.min(b) - alpha * lp))
        .sum();
    reward + gamma * soft_value
}

/// Soft Bellman targets for a batch, evaluated on the next states.
pub fn compute_targets(
    batch: &Batch,
    target1: &Mlp,
    target2: &Mlp,
    actor: &Mlp,
    alpha: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let next = batch.next_states.view();
    let log_probs = log_softmax_rows(&actor.forward(next)?);
    let q1 = target1.forward(next)?;
    let q2 = target2.forward(next)?;
    Ok((0..batch.len())
        .map(|i| {
            let lp = log_probs.row(i);
            let probs: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
            soft_backup(
                batch.rewards[i],
                batch.dones[i],
                gamma,
                &probs,
                lp.as_slice().expect("row is contiguous"),
                q1.row(i).as_slice().expect("row is contiguous"),
                q2.row(i).as_slice().expect("row is contiguous"),
                alpha,
            )
        })
        .collect())
}

/// Mean squared error between `Q(s, a)` and the targets, with gradients.
pub fn critic_loss(
    critic: &Mlp,
    states: ArrayView2<f64>,
    actions: &[usize],
    targets: &[f64],
) -> Result<(f64, Gradients)> {
    let n = actions.len();
    if n == 0 || targets.len() != n || states.nrows() != n {
        return Err(Error::Shape("critic batch lengths differ".into()));
    }
    let trace = critic.forward_trace(states)?;
    let mut grad = Array2::zeros(trace.output.raw_dim());
    let mut loss = 0.0;
    for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
        if a >= critic.output_dim() {
            return Err(Error::InvalidAction {
                action: a,
                capacity: critic.output_dim() - 1,
            });
        }
        let err = trace.output[[i, a]] - y;
        loss += err * err;
        grad[[i, a]] = 2.0 * err / n as f64;
    }
    Ok((loss / n as f64, critic.backward(&trace, &grad)))
}

/// Output of [`actor_loss`].
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Gradients,
    /// Batch mean of `sum_a pi log pi` (negative entropy).
    pub mean_neg_entropy: f64,
}

/// `mean_s sum_a pi(a|s) (alpha log pi(a|s) - q_min(s, a))` and its gradient
/// with `q_min` held fixed.
pub fn actor_loss(actor: &Mlp, states: ArrayView2<f64>, q_min: &Array2<f64>, alpha: f64) -> Result<ActorLoss> {
    let trace = actor.forward_trace(states)?;
    if q_min.dim() != trace.output.dim() {
        return Err(Error::Shape("q_min does not match actor output".into()));
    }
    let n = trace.output.nrows() as f64;
    let log_probs = log_softmax_rows(&trace.output);
    let mut grad = Array2::zeros(trace.output.raw_dim());
    let mut loss = 0.0;
    let mut neg_entropy = 0.0;
    for ((lp, q), mut g) in log_probs
        .rows()
        .into_iter()
        .zip(q_min.rows())
        .zip(grad.rows_mut())
    {
        // f = sum_a p_a (alpha lp_a - q_a); df/dz_j = p_j (h_j - sum_a p_a h_a)
        // with h_a = alpha (lp_a + 1) - q_a. The +1 cancels in the difference.
        let h: Vec<f64> = lp.iter().zip(q).map(|(&l, &qv)| alpha * l - qv).collect();
        let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        let mean_h: f64 = p.iter().zip(&h).map(|(a, b)| a * b).sum();
        loss += mean_h;
        neg_entropy += p.iter().zip(lp).map(|(a, b)| a * b).sum::<f64>();
        for j in 0..p.len() {
            g[j] = p[j] * (h[j] - mean_h) / n;
        }
    }
    Ok(ActorLoss {
        loss: loss / n,
        grads: actor.backward(&trace, &grad),
        mean_neg_entropy: neg_entropy / n,
    })
}

/// Temperature loss `-log_alpha (target_entropy + E[sum pi log pi])` and its
/// derivative in `log_alpha`.
pub fn alpha_loss(log_alpha: f64, mean_neg_entropy: f64, target_entropy: f64) -> (f64, f64) {
    let slack = target_entropy + mean_neg_entropy;
    (-log_alpha * slack, -slack)
}

/// `target <- (1 - tau) target + tau source`, parameter-wise.
pub fn polyak_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(source) {
        return Err(Error::Shape("polyak update between different shapes".into()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid("tau must be in (0, 1]"));
    }
    for (t, s) in target.tensors_mut().into_iter().zip(source.tensors()) {
        for (x, y) in t.iter_mut().zip(s) {
            *x = if tau == 1.0 { *y } else { (1.0 - tau) * *x + tau * y };
        }
    }
    Ok(())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// Losses from one update.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct LossReport {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub alpha_value: f64,
}

/// Parameters plus optimizer state and the action generator.
#[derive(Clone, Debug)]
pub struct SacAgent {
    pub params: AgentParams,
    config: TrainConfig,
    target_entropy: f64,
    opt_actor: Adam,
    opt_critic1: Adam,
    opt_critic2: Adam,
    opt_alpha: Adam,
    rng: SimRng,
}

fn tensor_lens(net: &Mlp) -> Vec<usize> {
    net.tensors().iter().map(|t| t.len()).collect()
}

impl SacAgent {
    pub fn new(capacity: usize, config: TrainConfig) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("cache capacity C must be >= 1"));
        }
        config.validate()?;
        let params = AgentParams::new(capacity, &config.hidden_sizes, config.seed)?;
        Ok(Self::from_params(params, config))
    }

    pub fn from_params(params: AgentParams, config: TrainConfig) -> Self {
        let target_entropy = config.target_entropy_for(params.capacity() + 1);
        SacAgent {
            opt_actor: Adam::new(config.lr_actor, &tensor_lens(&params.actor)),
            opt_critic1: Adam::new(config.lr_critic, &tensor_lens(&params.critic1)),
            opt_critic2: Adam::new(config.lr_critic, &tensor_lens(&params.critic2)),
            opt_alpha: Adam::new(config.lr_alpha, &[1]),
            rng: SimRng::with_stream(config.seed, STREAM_ACTIONS),
            target_entropy,
            params,
            config,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn capacity(&self) -> usize {
        self.params.capacity()
    }

    pub fn select_action(&mut self, state: &[f64], mode: ActionMode) -> Result<Action> {
        let probs = self.params.action_probs(state)?;
        Ok(Action(match mode {
            ActionMode::Greedy => greedy_index(&probs),
            ActionMode::Sample => self.rng.categorical(&probs),
        }))
    }

    /// One gradient step on both critics, the actor, and the temperature,
    /// followed by the target updates.
    pub fn update(&mut self, batch: &Batch) -> Result<LossReport> {
        let alpha = self.params.alpha();
        let gamma = self.config.gamma;
        let p = &mut self.params;
        let targets = compute_targets(batch, &p.target1, &p.target2, &p.actor, alpha, gamma)?;

        let states = batch.states.view();
        let (loss1, g1) = critic_loss(&p.critic1, states, &batch.actions, &targets)?;
        let (loss2, g2) = critic_loss(&p.critic2, states, &batch.actions, &targets)?;
        self.opt_critic1.step(p.critic1.tensors_mut(), g1.tensors());
        self.opt_critic2.step(p.critic2.tensors_mut(), g2.tensors());

        let q1 = p.critic1.forward(states)?;
        let q2 = p.critic2.forward(states)?;
        let q_min = ndarray::Zip::from(&q1).and(&q2).map_collect(|a, b| a.min(*b));
        let actor = actor_loss(&p.actor, states, &q_min, alpha)?;
        self.opt_actor.step(p.actor.tensors_mut(), actor.grads.tensors());

        let (a_loss, a_grad) = alpha_loss(p.log_alpha, actor.mean_neg_entropy, self.target_entropy);
        let mut log_alpha = [p.log_alpha];
        self.opt_alpha.step(vec![&mut log_alpha], vec![&[a_grad]]);
        p.log_alpha = log_alpha[0];

        polyak_update(&mut p.target1, &p.critic1, self.config.tau)?;
        polyak_update(&mut p.target2, &p.critic2, self.config.tau)?;

        let report = LossReport {
            critic1: loss1,
            critic2: loss2,
            actor: actor.loss,
            alpha: a_loss,
            entropy: -actor.mean_neg_entropy,
            alpha_value: p.alpha(),
        };
        let losses = [report.critic1, report.critic2, report.actor, report.alpha];
        if losses.iter().any(|l| !l.is_finite())
            || !p.log_alpha.is_finite()
            || p.networks().iter().any(|(_, n)| !n.is_finite())
        {
            return Err(Error::Divergence(format!(
                "non-finite loss or parameter after update {}: {report:?}",
                self.opt_actor.steps()
            )));
        }
        Ok(report)
    }
}

/// Mean entropy of the actor's distribution over a batch of states.
pub fn mean_entropy(actor: &Mlp, states: ArrayView2<f64>) -> Result<f64> {
    let lp = log_softmax_rows(&actor.forward(states)?);
    let n = lp.nrows() as f64;
    Ok(-lp.mapv(|l| l.exp() * l).sum_axis(Axis(1)).sum() / n)
}
