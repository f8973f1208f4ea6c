//! Cache state, sliding request window, state encoding, windowed hit-ratio
//! reward, and the step-based environment shared by the RL agent and the
//! baseline policies.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{SimRng, STREAM_LATENCY};
use crate::workload::ContentId;

const NOT_CACHED: u32 = u32::MAX;

/// Index into the action space `0..=C`. Zero keeps the cache unchanged and
/// `k >= 1` overwrites slot `k`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Action(pub usize);

impl Action {
    pub const KEEP: Action = Action(0);

    /// Action overwriting the zero-based slot `slot`.
    pub fn replace(slot: usize) -> Self {
        Action(slot + 1)
    }

    pub fn index(self) -> usize {
        self.0
    }

    /// Zero-based slot, or `None` for keep.
    pub fn slot(self) -> Option<usize> {
        self.0.checked_sub(1)
    }
}

/// `log(1 + ID)` for each slot followed by `log(1 + R)` for each slot.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Slots, sliding window, and per-content window counts.
///
/// Window counts are kept for every content that appears in the window, not
/// only cached ones, so a content placed in a slot starts with its true count.
#[derive(Clone, Debug)]
pub struct CacheState {
    slots: Vec<Option<ContentId>>,
    window: VecDeque<ContentId>,
    window_size: usize,
    /// Occurrences in the window, indexed by content id.
    counts: Vec<u32>,
    /// Slot holding each content, or `NOT_CACHED`.
    slot_of: Vec<u32>,
    last_access: Vec<u64>,
    inserted_at: Vec<u64>,
    clock: u64,
}

impl CacheState {
    pub fn new(capacity: usize, window_size: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("cache capacity C must be >= 1"));
        }
        if window_size == 0 {
            return Err(Error::invalid("window size L must be >= 1"));
        }
        Ok(CacheState {
            slots: vec![None; capacity],
            window: VecDeque::with_capacity(window_size + 1),
            window_size,
            counts: Vec::new(),
            slot_of: Vec::new(),
            last_access: vec![0; capacity],
            inserted_at: vec![0; capacity],
            clock: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn slots(&self) -> &[Option<ContentId>] {
        &self.slots
    }

    pub fn window(&self) -> &VecDeque<ContentId> {
        &self.window
    }

    /// Number of requests recorded so far.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    fn grow(&mut self, id: ContentId) {
        let needed = id.get() as usize + 1;
        if self.counts.len() < needed {
            self.counts.resize(needed, 0);
            self.slot_of.resize(needed, NOT_CACHED);
        }
    }

    /// Occurrences of `id` among the last `L` requests.
    pub fn window_count(&self, id: ContentId) -> u32 {
        self.counts.get(id.get() as usize).copied().unwrap_or(0)
    }

    pub fn slot_of(&self, id: ContentId) -> Option<usize> {
        match self.slot_of.get(id.get() as usize) {
            Some(&s) if s != NOT_CACHED => Some(s as usize),
            _ => None,
        }
    }

    pub fn is_cached(&self, id: ContentId) -> bool {
        self.slot_of(id).is_some()
    }

    pub fn first_empty(&self) -> Option<usize> {
        self.slots.iter().position(Option::is_none)
    }

    /// Window counts `R` per slot (`None` for empty slots).
    pub fn slot_counts(&self) -> Vec<Option<u32>> {
        self.slots
            .iter()
            .map(|s| s.map(|id| self.window_count(id)))
            .collect()
    }

    /// Clock value of the most recent hit or insertion per slot.
    pub fn slot_last_access(&self) -> Vec<Option<u64>> {
        self.slots
            .iter()
            .zip(&self.last_access)
            .map(|(s, &t)| s.map(|_| t))
            .collect()
    }

    pub fn slot_inserted_at(&self) -> Vec<Option<u64>> {
        self.slots
            .iter()
            .zip(&self.inserted_at)
            .map(|(s, &t)| s.map(|_| t))
            .collect()
    }

    /// Append a request to the window and report whether it hit.
    pub fn record_request(&mut self, id: ContentId) -> bool {
        self.grow(id);
        self.clock += 1;
        self.window.push_back(id);
        self.counts[id.get() as usize] += 1;
        if self.window.len() > self.window_size {
            let head = self.window.pop_front().expect("window is non-empty");
            self.counts[head.get() as usize] -= 1;
        }
        match self.slot_of(id) {
            Some(slot) => {
                self.last_access[slot] = self.clock;
                true
            }
            None => false,
        }
    }

    /// Apply a replace-or-keep decision for an uncached `requested` content.
    /// Returns the evicted content, if any.
    pub fn apply_action(&mut self, action: Action, requested: ContentId) -> Result<Option<ContentId>> {
        if action.index() > self.capacity() {
            return Err(Error::InvalidAction {
                action: action.index(),
                capacity: self.capacity(),
            });
        }
        if self.is_cached(requested) {
            return Err(Error::ContractViolation(format!(
                "content {requested} is already cached"
            )));
        }
        let Some(slot) = action.slot() else {
            return Ok(None);
        };
        self.grow(requested);
        let evicted = self.slots[slot].replace(requested);
        if let Some(old) = evicted {
            self.slot_of[old.get() as usize] = NOT_CACHED;
        }
        self.slot_of[requested.get() as usize] = slot as u32;
        self.last_access[slot] = self.clock;
        self.inserted_at[slot] = self.clock;
        Ok(evicted)
    }

    /// Fill slots directly, bypassing the action interface. Used to start
    /// runs from a known cache content.
    pub fn preload(&mut self, ids: &[ContentId]) -> Result<()> {
        if ids.len() > self.capacity() {
            return Err(Error::invalid("more preload ids than slots"));
        }
        for (slot, &id) in ids.iter().enumerate() {
            if self.is_cached(id) {
                return Err(Error::invalid(format!("duplicate preload id {id}")));
            }
            if let Some(old) = self.slots[slot].take() {
                self.slot_of[old.get() as usize] = NOT_CACHED;
            }
            self.grow(id);
            self.slots[slot] = Some(id);
            self.slot_of[id.get() as usize] = slot as u32;
        }
        Ok(())
    }

    /// Log-encoded state of length `2C`; empty slots and zero counts map to 0.
    pub fn encode_state(&self) -> StateVector {
        let c = self.capacity();
        let mut values = vec![0.0; 2 * c];
        for (k, slot) in self.slots.iter().enumerate() {
            if let Some(id) = slot {
                values[k] = f64::from(id.get()).ln_1p();
                values[c + k] = f64::from(self.window_count(*id)).ln_1p();
            }
        }
        StateVector(values)
    }
}

/// Hit/miss outcomes of the last `L` requests with a running hit count.
#[derive(Clone, Debug)]
pub struct HitWindow {
    history: VecDeque<bool>,
    size: usize,
    hits: usize,
}

impl HitWindow {
    pub fn new(size: usize) -> Self {
        HitWindow {
            history: VecDeque::with_capacity(size + 1),
            size,
            hits: 0,
        }
    }

    pub fn push(&mut self, hit: bool) {
        self.history.push_back(hit);
        self.hits += usize::from(hit);
        if self.history.len() > self.size {
            let old = self.history.pop_front().expect("history is non-empty");
            self.hits -= usize::from(old);
        }
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Hits divided by `L` once the window is full, by the current length
    /// before that.
    pub fn ratio(&self) -> Result<f64> {
        if self.history.is_empty() {
            return Err(Error::UndefinedMetric("hit ratio of an empty history"));
        }
        Ok(self.hits as f64 / self.history.len() as f64)
    }

    /// From-scratch recount of [`HitWindow::ratio`].
    pub fn recount(&self) -> Result<f64> {
        if self.history.is_empty() {
            return Err(Error::UndefinedMetric("hit ratio of an empty history"));
        }
        Ok(self.history.iter().filter(|&&h| h).count() as f64 / self.history.len() as f64)
    }
}

/// Windowed hit ratio of an explicit history (last `window` entries).
pub fn hit_ratio(history: &[bool], window: usize) -> Result<f64> {
    let tail = &history[history.len().saturating_sub(window)..];
    if tail.is_empty() {
        return Err(Error::UndefinedMetric("hit ratio of an empty history"));
    }
    Ok(tail.iter().filter(|&&h| h).count() as f64 / tail.len() as f64)
}

/// Edge hits cost a constant latency; misses pay the remote link with uniform
/// jitter.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub edge_ms: f64,
    pub remote_base_ms: f64,
    pub remote_jitter_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            edge_ms: 5.0,
            remote_base_ms: 50.0,
            remote_jitter_ms: 20.0,
        }
    }
}

impl LatencyModel {
    pub fn new(edge_ms: f64, remote_base_ms: f64, remote_jitter_ms: f64) -> Result<Self> {
        let model = LatencyModel {
            edge_ms,
            remote_base_ms,
            remote_jitter_ms,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.edge_ms, self.remote_base_ms, self.remote_jitter_ms];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("latencies must be finite and >= 0"));
        }
        if self.remote_base_ms - self.remote_jitter_ms < self.edge_ms {
            return Err(Error::invalid(
                "remote_base_ms - remote_jitter_ms must be >= edge_ms",
            ));
        }
        Ok(())
    }

    pub fn sample_miss(&self, rng: &mut SimRng) -> f64 {
        self.remote_base_ms + self.remote_jitter_ms * (2.0 * rng.uniform() - 1.0)
    }
}

/// What a policy sees when asked to decide on a miss.
pub struct Decision<'a> {
    pub state: &'a StateVector,
    pub cache: &'a CacheState,
    pub requested: ContentId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub hit: bool,
    pub action: Action,
    pub reward: f64,
    pub next_state: StateVector,
    pub latency_ms: f64,
    pub evicted: Option<ContentId>,
}

/// Single-owner environment: cache, hit history, latency model, and the
/// jitter generator.
#[derive(Clone, Debug)]
pub struct CacheEnv {
    cache: CacheState,
    hits: HitWindow,
    latency: LatencyModel,
    rng: SimRng,
}

impl CacheEnv {
    pub fn new(capacity: usize, window_size: usize, latency: LatencyModel, seed: u64) -> Result<Self> {
        latency.validate()?;
        Ok(CacheEnv {
            cache: CacheState::new(capacity, window_size)?,
            hits: HitWindow::new(window_size),
            latency,
            rng: SimRng::with_stream(seed, STREAM_LATENCY),
        })
    }

    pub fn cache(&self) -> &CacheState {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut CacheState {
        &mut self.cache
    }

    pub fn hit_window(&self) -> &HitWindow {
        &self.hits
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    /// Process one request. `decide` is consulted only on misses.
    pub fn step<F>(&mut self, requested: ContentId, mut decide: F) -> Result<StepOutcome>
    where
        F: FnMut(&Decision<'_>) -> Action,
    {
        let hit = self.cache.record_request(requested);
        let (action, evicted, latency_ms) = if hit {
            (Action::KEEP, None, self.latency.edge_ms)
        } else {
            let state = self.cache.encode_state();
            let action = decide(&Decision {
                state: &state,
                cache: &self.cache,
                requested,
            });
            let evicted = self.cache.apply_action(action, requested)?;
            (action, evicted, self.latency.sample_miss(&mut self.rng))
        };
        self.hits.push(hit);
        Ok(StepOutcome {
            hit,
            action,
            reward: self.hits.ratio()?,
            next_state: self.cache.encode_state(),
            latency_ms,
            evicted,
        })
    }
}

/// CSV run log with columns `step,requested,hit,action,evicted,reward,latency_ms`.
pub struct RunLog<W: Write> {
    writer: csv::Writer<W>,
}

#[derive(Serialize)]
struct RunLogRow {
    step: u64,
    requested: u32,
    hit: bool,
    action: usize,
    evicted: Option<u32>,
    reward: f64,
    latency_ms: f64,
}

impl<W: Write> RunLog<W> {
    pub fn new(inner: W) -> Self {
        RunLog {
            writer: csv::Writer::from_writer(inner),
        }
    }

    pub fn record(&mut self, step: u64, requested: ContentId, outcome: &StepOutcome) -> Result<()> {
        self.writer.serialize(RunLogRow {
            step,
            requested: requested.get(),
            hit: outcome.hit,
            action: outcome.action.index(),
            evicted: outcome.evicted.map(ContentId::get),
            reward: outcome.reward,
            latency_ms: outcome.latency_ms,
        })?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))
    }
}
