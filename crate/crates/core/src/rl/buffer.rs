use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::Vector;

/// One environment step in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub z: Vector,
    pub v: Vector,
    pub cost: f64,
    pub z_next: Vector,
    /// Set only when the episode ended on an infeasibility event.
    pub terminal: bool,
}

/// Ring buffer with a seeded uniform sampler (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), next: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
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

    pub fn sample_indices(&mut self, batch: usize) -> Vec<usize> {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        (0..batch).map(|_| self.rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample(&mut self, batch: usize) -> Vec<Transition> {
        self.sample_indices(batch).into_iter().map(|i| self.items[i].clone()).collect()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}
