use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Column-stacked minibatch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InsufficientData("empty batch".into()))?;
        let dim = first.state.len();
        let mut states = Array2::zeros((items.len(), dim));
        let mut next_states = Array2::zeros((items.len(), dim));
        for (i, t) in items.iter().enumerate() {
            if t.state.len() != dim || t.next_state.len() != dim {
                return Err(Error::Shape("transition state lengths differ".into()));
            }
            states.row_mut(i).assign(&ndarray::aview1(&t.state));
            next_states.row_mut(i).assign(&ndarray::aview1(&t.next_state));
        }
        Ok(Batch {
            states,
            actions: items.iter().map(|t| t.action).collect(),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states,
            dones: items.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Ring buffer of transitions with its own sampling generator.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
    rng: SimRng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng: SimRng) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be >= 1"));
        }
        Ok(ReplayBuffer {
            items: Vec::new(),
            capacity,
            next: 0,
            rng,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Distinct indices, uniformly chosen (Floyd's algorithm).
    pub fn sample_indices(&mut self, batch_size: usize) -> Vec<usize> {
        let n = self.items.len();
        let k = batch_size.min(n);
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        for j in (n - k)..n {
            let t = self.rng.below(j as u64 + 1) as usize;
            if chosen.contains(&t) {
                chosen.push(j);
            } else {
                chosen.push(t);
            }
        }
        chosen
    }

    /// Up to `batch_size` distinct transitions.
    pub fn sample(&mut self, batch_size: usize) -> Result<Batch> {
        if self.items.is_empty() || batch_size == 0 {
            return Err(Error::InsufficientData("cannot sample an empty batch".into()));
        }
        let idx = self.sample_indices(batch_size);
        let picked: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Batch::from_transitions(&picked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(x: f64) -> Transition {
        Transition {
            state: vec![x, 0.0],
            action: 0,
            reward: x,
            next_state: vec![0.0, x],
            done: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3, SimRng::new(0)).unwrap();
        for i in 0..5 {
            b.push(t(i as f64));
        }
        assert_eq!(b.len(), 3);
        let mut rewards: Vec<f64> = b.items.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn batches_have_distinct_indices() {
        let mut b = ReplayBuffer::new(100, SimRng::new(4)).unwrap();
        for i in 0..100 {
            b.push(t(i as f64));
        }
        for _ in 0..50 {
            let mut idx = b.sample_indices(64);
            assert_eq!(idx.len(), 64);
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 64);
        }
        let batch = b.sample(8).unwrap();
        assert_eq!(batch.states.dim(), (8, 2));
    }

    #[test]
    fn empty_buffer_cannot_sample() {
        let mut b = ReplayBuffer::new(4, SimRng::new(0)).unwrap();
        assert!(b.sample(2).is_err());
        assert!(ReplayBuffer::new(0, SimRng::new(0)).is_err());
    }
}
