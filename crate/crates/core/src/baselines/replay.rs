//! Reservoir-sampled replay buffer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed-capacity uniform reservoir over everything inserted so far: after
/// `n >= capacity` insertions each of the `n` items is retained with
/// probability `capacity / n`.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<(Vec<f32>, usize)>,
    seen: u64,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity),
            seen: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn items(&self) -> &[(Vec<f32>, usize)] {
        &self.items
    }

    /// Algorithm R.
    pub fn insert(&mut self, sample: &[f32], label: usize) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push((sample.to_vec(), label));
        } else {
            let j = self.rng.gen_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = (sample.to_vec(), label);
            }
        }
    }

    /// Draws `count` stored samples: without replacement when the buffer
    /// holds at least `count`, with replacement otherwise. Empty buffer
    /// draws nothing.
    pub fn draw(&mut self, count: usize) -> Vec<(Vec<f32>, usize)> {
        if self.items.is_empty() {
            return Vec::new();
        }
        if self.items.len() >= count {
            // partial Fisher-Yates over an index vector
            let mut idx: Vec<usize> = (0..self.items.len()).collect();
            for i in 0..count {
                let j = self.rng.gen_range(i..idx.len());
                idx.swap(i, j);
            }
            idx[..count]
                .iter()
                .map(|&i| self.items[i].clone())
                .collect()
        } else {
            (0..count)
                .map(|_| self.items[self.rng.gen_range(0..self.items.len())].clone())
                .collect()
        }
    }
}
