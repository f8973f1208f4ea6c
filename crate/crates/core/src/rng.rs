//! The one random number generator used by every component.
//!
//! All randomness is drawn as raw `u64` words from ChaCha8 and converted to
//! floats and bounded integers here, so traces and training runs do not depend
//! on the value-stability policy of any distribution crate.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Name of the pinned generator. Echoed into configs and trace headers.
pub const RNG_ALGORITHM: &str = "ChaCha8";

/// Stream used for request sampling.
pub const STREAM_REQUESTS: u64 = 0;
/// Stream used for drawing "random" popularity permutations.
pub const STREAM_SHIFTS: u64 = 1;
/// Stream used for latency jitter inside the environment.
pub const STREAM_LATENCY: u64 = 2;
/// Stream used for network initialisation.
pub const STREAM_INIT: u64 = 3;
/// Stream used for action sampling.
pub const STREAM_ACTIONS: u64 = 4;
/// Stream used for replay buffer sampling.
pub const STREAM_REPLAY: u64 = 5;
/// Stream used by the RANDOM baseline policy.
pub const STREAM_POLICY: u64 = 6;

/// Seeded ChaCha8 generator.
///
/// The 32-byte key is expanded from the 64-bit seed with SplitMix64, and
/// independent consumers select disjoint ChaCha streams.
#[derive(Clone, Debug)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SimRng {
    /// Generator on stream 0 for `seed`.
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, STREAM_REQUESTS)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        SimRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Unbiased (rejection on the top zone).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Index drawn from a probability vector by inverse CDF. Falls back to the
    /// last index when rounding leaves the cumulative sum just under `u`.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_words() {
        let mut a = SimRng::new(42);
        let mut b = SimRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = SimRng::with_stream(42, 0);
        let mut b = SimRng::with_stream(42, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn pinned_first_word() {
        // Freezes the seed expansion; changing it breaks every stored trace.
        let mut r = SimRng::new(0);
        assert_eq!(r.next_u64(), 0xbf94_d133_2d8e_e5e8);
        assert_eq!(RNG_ALGORITHM, "ChaCha8");
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = SimRng::new(7);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn below_in_range_and_shuffle_is_permutation() {
        let mut r = SimRng::new(3);
        for n in 1..50u64 {
            assert!(r.below(n) < n);
        }
        let mut v: Vec<u32> = (0..100).collect();
        r.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }
}
