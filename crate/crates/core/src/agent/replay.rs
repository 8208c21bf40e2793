use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Experience;

/// Fixed-capacity experience buffer with first-in first-out eviction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: Vec<Experience>,
    /// Slot the next insertion overwrites once the buffer is full.
    head: usize,
    inserted: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            buffer: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            inserted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Total number of insertions since creation.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, e: Experience) {
        if self.buffer.len() < self.capacity {
            self.buffer.push(e);
        } else {
            self.buffer[self.head] = e;
            self.head = (self.head + 1) % self.capacity;
        }
        self.inserted += 1;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.buffer[self.head..]
            .iter()
            .chain(&self.buffer[..self.head])
    }

    /// `n` distinct experiences drawn uniformly; all of them if fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Experience> {
        let n = n.min(self.buffer.len());
        index::sample(rng, self.buffer.len(), n)
            .into_iter()
            .map(|i| self.buffer[i])
            .collect()
    }
}
