//! Baseline eviction policies and the static-optimal oracle.
//!
//! Every policy answers the same question as the RL agent: on a miss, keep
//! the cache (action 0) or overwrite slot `k` (action `k`). Ties always go to
//! the lowest slot index. All policies except NEVER_REPLACE and the oracle
//! fill the first empty slot before applying their own rule.

use std::fmt;
use std::str::FromStr;

use crate::cache::{Action, Decision};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::workload::{ContentId, PopularityModel};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    LfuWindow,
    Lru,
    Fifo,
    Random,
    NeverReplace,
    StaticOracle,
    RlAgent,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::LfuWindow,
        PolicyKind::Lru,
        PolicyKind::Fifo,
        PolicyKind::Random,
        PolicyKind::NeverReplace,
        PolicyKind::StaticOracle,
        PolicyKind::RlAgent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::LfuWindow => "LFU_WINDOW",
            PolicyKind::Lru => "LRU",
            PolicyKind::Fifo => "FIFO",
            PolicyKind::Random => "RANDOM",
            PolicyKind::NeverReplace => "NEVER_REPLACE",
            PolicyKind::StaticOracle => "STATIC_ORACLE",
            PolicyKind::RlAgent => "RL_AGENT",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    /// Case-insensitive; `-` and `_` are interchangeable.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown policy `{s}`")))
    }
}

/// A decision rule consulted on cache misses.
pub trait Policy {
    fn kind(&self) -> PolicyKind;
    fn decide(&mut self, decision: &Decision<'_>) -> Action;
}

fn argmin_by_key<T: PartialOrd + Copy>(values: &[Option<T>]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Window-LFU rule over slot counts. Empty slots are filled first; otherwise
/// the least-counted slot is replaced unless every cached count exceeds the
/// requested content's count.
pub fn lfu_decide(slot_counts: &[Option<u32>], requested_count: u32) -> Action {
    if let Some(k) = slot_counts.iter().position(Option::is_none) {
        return Action::replace(k);
    }
    match argmin_by_key(slot_counts) {
        Some(k) if slot_counts[k].is_some_and(|c| c <= requested_count) => Action::replace(k),
        _ => Action::KEEP,
    }
}

/// Replace the least recently used slot; empty slots first.
pub fn lru_decide(last_access: &[Option<u64>]) -> Action {
    if let Some(k) = last_access.iter().position(Option::is_none) {
        return Action::replace(k);
    }
    argmin_by_key(last_access).map_or(Action::KEEP, Action::replace)
}

/// Replace the oldest insertion; empty slots first.
pub fn fifo_decide(inserted_at: &[Option<u64>]) -> Action {
    lru_decide(inserted_at)
}

/// Uniform over `0..=C`.
pub fn random_decide(capacity: usize, rng: &mut SimRng) -> Action {
    Action(rng.below(capacity as u64 + 1) as usize)
}

/// Static-optimal rule. `slot_ranks[k]` is the popularity rank of slot `k`'s
/// content (`None` when empty, treated as least popular). A requested content
/// inside the top `C` replaces the least popular slot that lies outside the
/// top `C`; anything else keeps.
pub fn static_oracle_decide(slot_ranks: &[Option<u32>], requested_rank: u32) -> Action {
    let c = slot_ranks.len() as u32;
    if requested_rank > c {
        return Action::KEEP;
    }
    let mut worst: Option<(usize, u32)> = None;
    for (k, r) in slot_ranks.iter().enumerate() {
        let r = r.unwrap_or(u32::MAX);
        if r > c && worst.is_none_or(|(_, w)| r > w) {
            worst = Some((k, r));
        }
    }
    worst.map_or(Action::KEEP, |(k, _)| Action::replace(k))
}

pub struct LfuWindow;

impl Policy for LfuWindow {
    fn kind(&self) -> PolicyKind {
        PolicyKind::LfuWindow
    }

    fn decide(&mut self, d: &Decision<'_>) -> Action {
        lfu_decide(&d.cache.slot_counts(), d.cache.window_count(d.requested))
    }
}

pub struct Lru;

impl Policy for Lru {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Lru
    }

    fn decide(&mut self, d: &Decision<'_>) -> Action {
        lru_decide(&d.cache.slot_last_access())
    }
}

pub struct Fifo;

impl Policy for Fifo {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Fifo
    }

    fn decide(&mut self, d: &Decision<'_>) -> Action {
        fifo_decide(&d.cache.slot_inserted_at())
    }
}

pub struct RandomPolicy {
    rng: SimRng,
}

impl RandomPolicy {
    pub fn new(rng: SimRng) -> Self {
        RandomPolicy { rng }
    }
}

impl Policy for RandomPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Random
    }

    fn decide(&mut self, d: &Decision<'_>) -> Action {
        match d.cache.first_empty() {
            Some(k) => Action::replace(k),
            None => random_decide(d.cache.capacity(), &mut self.rng),
        }
    }
}

pub struct NeverReplace;

impl Policy for NeverReplace {
    fn kind(&self) -> PolicyKind {
        PolicyKind::NeverReplace
    }

    fn decide(&mut self, _: &Decision<'_>) -> Action {
        Action::KEEP
    }
}

/// Oracle that knows the true popularity in force.
pub struct StaticOracle {
    model: PopularityModel,
}

impl StaticOracle {
    pub fn new(model: PopularityModel) -> Self {
        StaticOracle { model }
    }

    /// Swap in the popularity model after a shift.
    pub fn set_model(&mut self, model: PopularityModel) {
        self.model = model;
    }

    fn rank(&self, id: ContentId) -> u32 {
        if id.index() < self.model.catalog_size() {
            self.model.rank(id)
        } else {
            u32::MAX
        }
    }
}

impl Policy for StaticOracle {
    fn kind(&self) -> PolicyKind {
        PolicyKind::StaticOracle
    }

    fn decide(&mut self, d: &Decision<'_>) -> Action {
        let ranks: Vec<Option<u32>> = d
            .cache
            .slots()
            .iter()
            .map(|s| s.map(|id| self.rank(id)))
            .collect();
        static_oracle_decide(&ranks, self.rank(d.requested))
    }
}

/// Construct any baseline. `RL_AGENT` needs a trained agent and is rejected.
pub fn baseline(kind: PolicyKind, model: &PopularityModel, rng: SimRng) -> Result<Box<dyn Policy>> {
    Ok(match kind {
        PolicyKind::LfuWindow => Box::new(LfuWindow),
        PolicyKind::Lru => Box::new(Lru),
        PolicyKind::Fifo => Box::new(Fifo),
        PolicyKind::Random => Box::new(RandomPolicy::new(rng)),
        PolicyKind::NeverReplace => Box::new(NeverReplace),
        PolicyKind::StaticOracle => Box::new(StaticOracle::new(model.clone())),
        PolicyKind::RlAgent => {
            return Err(Error::invalid("RL_AGENT is not a baseline; load a checkpoint"))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{CacheEnv, LatencyModel};
    use crate::workload::{generate_trace, ShiftSchedule};

    #[test]
    fn parse_kinds_case_insensitively() {
        assert_eq!("lfu_window".parse::<PolicyKind>().unwrap(), PolicyKind::LfuWindow);
        assert_eq!("Static-Oracle".parse::<PolicyKind>().unwrap(), PolicyKind::StaticOracle);
        assert_eq!("RL_AGENT".parse::<PolicyKind>().unwrap(), PolicyKind::RlAgent);
        assert!("lfu2".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn lfu_examples() {
        assert_eq!(lfu_decide(&[Some(5), Some(1), Some(3)], 2), Action(2));
        assert_eq!(lfu_decide(&[Some(5), Some(4)], 0), Action::KEEP);
        assert_eq!(lfu_decide(&[Some(5), None, None], 0), Action(2));
        assert_eq!(lfu_decide(&[Some(2), Some(2)], 2), Action(1));
    }

    #[test]
    fn lru_examples() {
        assert_eq!(lru_decide(&[Some(10), Some(3), Some(7)]), Action(2));
        assert_eq!(lru_decide(&[Some(10), None]), Action(2));
    }

    #[test]
    fn lru_single_slot_always_evicts_on_distinct_misses() {
        let mut env = CacheEnv::new(1, 10, LatencyModel::default(), 0).unwrap();
        let mut policy = Lru;
        for i in 1..=20u32 {
            let out = env
                .step(ContentId::new(i).unwrap(), |d| policy.decide(d))
                .unwrap();
            assert_eq!(out.action, Action(1));
            if i > 1 {
                assert_eq!(out.evicted, ContentId::new(i - 1));
            }
        }
    }

    #[test]
    fn oracle_examples() {
        // C = 2, top-2 are ranks 1 and 2.
        assert_eq!(static_oracle_decide(&[Some(1), Some(2)], 1), Action::KEEP);
        assert_eq!(static_oracle_decide(&[Some(1), Some(7)], 5), Action::KEEP);
        assert_eq!(static_oracle_decide(&[None, None], 2), Action(1));
        assert_eq!(static_oracle_decide(&[Some(1), None], 9), Action::KEEP);
        assert_eq!(static_oracle_decide(&[Some(9), Some(5)], 2), Action(1));
    }

    #[test]
    fn random_policy_is_balanced_for_single_slot() {
        let mut rng = SimRng::new(21);
        let n = 10_000;
        let keeps = (0..n).filter(|_| random_decide(1, &mut rng) == Action::KEEP).count();
        let se = (0.25f64 / n as f64).sqrt();
        assert!((keeps as f64 / n as f64 - 0.5).abs() < 3.0 * se);

        let mut a = SimRng::new(5);
        let mut b = SimRng::new(5);
        for _ in 0..100 {
            let x = random_decide(7, &mut a);
            assert_eq!(x, random_decide(7, &mut b));
            assert!(x.index() <= 7);
        }
    }

    #[test]
    fn lfu_converges_to_popular_contents() {
        // 50 L steps of stationary Zipf traffic; at least 80% of cached items
        // should sit in the top 2C.
        let (m, c, l) = (200, 10, 200);
        let model = PopularityModel::new(m, 1.1).unwrap();
        let trace = generate_trace(&model, &ShiftSchedule::empty(), 50 * l, 17).unwrap();
        let mut env = CacheEnv::new(c, l, LatencyModel::default(), 17).unwrap();
        let mut lfu = LfuWindow;
        for &r in &trace.requests {
            env.step(r, |d| lfu.decide(d)).unwrap();
        }
        let good = env
            .cache()
            .slots()
            .iter()
            .flatten()
            .filter(|id| model.rank(**id) as usize <= 2 * c)
            .count();
        assert!(good * 10 >= 8 * c, "only {good} of {c} in top 2C");
    }
}
