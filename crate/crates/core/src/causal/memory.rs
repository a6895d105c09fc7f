use std::collections::VecDeque;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{count, ConceptLevel};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One stored concept: an item index at the item level, a detached concept
/// vector at the interest level.
#[derive(Clone, Debug, PartialEq)]
pub enum MemoryEntry {
    Item(usize),
    Vector(Vec<f64>),
}

impl MemoryEntry {
    pub fn level(&self) -> ConceptLevel {
        match self {
            MemoryEntry::Item(_) => ConceptLevel::Item,
            MemoryEntry::Vector(_) => ConceptLevel::Interest,
        }
    }
}

/// Bounded first-in-first-out queue of substitute concepts for one level.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptMemory {
    level: ConceptLevel,
    queue: VecDeque<MemoryEntry>,
    capacity: usize,
    /// Vocabulary size (item level) or vector dimension (interest level),
    /// used when the queue is empty.
    cold_range: usize,
}

pub const DEFAULT_MEMORY_CAPACITY: usize = 4096;

impl ConceptMemory {
    pub fn item_level(capacity: usize, n_items: usize) -> Self {
        Self::new(ConceptLevel::Item, capacity, n_items)
    }

    pub fn interest_level(capacity: usize, dim: usize) -> Self {
        Self::new(ConceptLevel::Interest, capacity, dim)
    }

    fn new(level: ConceptLevel, capacity: usize, cold_range: usize) -> Self {
        assert!(capacity >= 1, "memory capacity must be positive");
        assert!(cold_range >= 1, "memory fallback range must be positive");
        Self {
            level,
            queue: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            cold_range,
        }
    }

    pub fn level(&self) -> ConceptLevel {
        self.level
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.queue.iter()
    }

    /// Appends in order, evicting from the head beyond capacity. Fails
    /// without modifying the queue if any entry has the wrong kind.
    pub fn enqueue<I>(&mut self, entries: I) -> Result<()>
    where
        I: IntoIterator<Item = MemoryEntry>,
    {
        let entries: Vec<MemoryEntry> = entries.into_iter().collect();
        if let Some(bad) = entries.iter().find(|e| e.level() != self.level) {
            return Err(Error::MemoryKind {
                expected: self.level.name(),
                got: bad.level().name(),
            });
        }
        count(|c| c.memory_writes += 1);
        for e in entries {
            if self.queue.len() == self.capacity {
                self.queue.pop_front();
            }
            self.queue.push_back(e);
        }
        Ok(())
    }

    pub fn dequeue(&mut self) -> Option<MemoryEntry> {
        count(|c| c.memory_reads += 1);
        self.queue.pop_front()
    }

    /// Takes the oldest entry as a substitute and re-enqueues it at the
    /// tail. An empty queue yields a uniformly random item, or a random unit
    /// vector at the interest level.
    pub fn draw_substitute(&mut self, rng: &mut Rng) -> MemoryEntry {
        match self.dequeue() {
            Some(e) => {
                self.queue.push_back(e.clone());
                e
            }
            None => match self.level {
                ConceptLevel::Item => MemoryEntry::Item(rng.random_range(0..self.cold_range)),
                ConceptLevel::Interest => MemoryEntry::Vector(random_unit_vector(self.cold_range, rng)),
            },
        }
    }
}

fn random_unit_vector(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
