//! Counterfactual data augmentation: concept scoring and splitting, FIFO
//! concept memories, replacement transforms and the synthesis of
//! counterfactual user representations.
//!
//! Every public operation bumps a thread-local counter so that callers can
//! check that serving paths never touch this module.

mod concepts;
mod memory;
mod synthesize;
mod transform;

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Variant;

pub use concepts::{
    interest_concept_scores, item_concept_scores, split_concepts, ConceptLevel, ConceptSequence,
    ConceptSplit,
};
pub use memory::{ConceptMemory, MemoryEntry, DEFAULT_MEMORY_CAPACITY};
pub use synthesize::{synthesize_counterfactuals, Memories, Synthesis};
pub use transform::{counterfactual_transform, plan_replacement, replacement_count};

/// Per-variant augmentation and contrastive settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantConfig {
    pub variant: Variant,
    /// Positive counterfactuals per example.
    #[serde(alias = "M")]
    pub m: usize,
    /// Negative counterfactuals per example.
    #[serde(alias = "N")]
    pub n: usize,
    pub r_rep: f64,
    /// Interest concepts.
    #[serde(alias = "K")]
    pub k: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub margin_co: f64,
    pub margin_ii: f64,
    pub memory_capacity: usize,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self::new(Variant::Item)
    }
}

impl VariantConfig {
    pub fn new(variant: Variant) -> Self {
        let (m, n) = match variant {
            Variant::Hierarchical => (2, 16),
            Variant::Item | Variant::Interest => (1, 8),
        };
        Self {
            variant,
            m,
            n,
            r_rep: 0.5,
            k: 20,
            lambda1: 1.0,
            lambda2: 1.0,
            margin_co: 1.0,
            margin_ii: 0.5,
            memory_capacity: DEFAULT_MEMORY_CAPACITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        transform::check_rate(self.r_rep)?;
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("M and N must both be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.memory_capacity == 0 {
            return Err(Error::Config("memory_capacity must be at least 1".into()));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("margin_co", self.margin_co),
            ("margin_ii", self.margin_ii),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// How `M` and `N` are spread over the two concept levels. The
    /// hierarchical variant gives the item level the larger half.
    pub fn level_counts(&self) -> LevelCounts {
        match self.variant {
            Variant::Item => LevelCounts {
                item_positives: self.m,
                item_negatives: self.n,
                interest_positives: 0,
                interest_negatives: 0,
            },
            Variant::Interest => LevelCounts {
                item_positives: 0,
                item_negatives: 0,
                interest_positives: self.m,
                interest_negatives: self.n,
            },
            Variant::Hierarchical => LevelCounts {
                item_positives: self.m.div_ceil(2),
                item_negatives: self.n.div_ceil(2),
                interest_positives: self.m / 2,
                interest_negatives: self.n / 2,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelCounts {
    pub item_positives: usize,
    pub item_negatives: usize,
    pub interest_positives: usize,
    pub interest_negatives: usize,
}

/// Calls into this module on the current thread since the last reset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CausalOpCounts {
    pub scoring: u64,
    pub splitting: u64,
    pub transforms: u64,
    pub syntheses: u64,
    pub memory_reads: u64,
    pub memory_writes: u64,
}

impl CausalOpCounts {
    pub fn total(&self) -> u64 {
        self.scoring
            + self.splitting
            + self.transforms
            + self.syntheses
            + self.memory_reads
            + self.memory_writes
    }
}

thread_local! {
    static COUNTS: Cell<CausalOpCounts> = Cell::new(CausalOpCounts::default());
}

pub(crate) fn count(f: impl FnOnce(&mut CausalOpCounts)) {
    COUNTS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

pub fn op_counts() -> CausalOpCounts {
    COUNTS.with(Cell::get)
}

pub fn reset_op_counts() {
    COUNTS.with(|c| c.set(CausalOpCounts::default()));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Dense1;

    #[test]
    fn defaults() {
        let c = VariantConfig::new(Variant::Item);
        assert_eq!((c.m, c.n, c.r_rep, c.k), (1, 8, 0.5, 20));
        assert_eq!((c.margin_co, c.margin_ii, c.lambda1, c.lambda2), (1.0, 0.5, 1.0, 1.0));
        let h = VariantConfig::new(Variant::Hierarchical);
        assert_eq!((h.m, h.n), (2, 16));
        let lc = h.level_counts();
        assert_eq!(
            (lc.item_positives, lc.interest_positives, lc.item_negatives, lc.interest_negatives),
            (1, 1, 8, 8)
        );
    }

    #[test]
    fn validation() {
        let mut c = VariantConfig::new(Variant::Interest);
        c.m = 0;
        assert!(c.validate().is_err());
        let mut c = VariantConfig::new(Variant::Interest);
        c.r_rep = 0.0;
        assert!(matches!(c.validate(), Err(Error::InvalidRate(_))));
    }

    #[test]
    fn counters_track_calls() {
        reset_op_counts();
        assert_eq!(op_counts().total(), 0);
        split_concepts(&Dense1::new(vec![1.0, 2.0])).unwrap();
        assert_eq!(op_counts().splitting, 1);
        reset_op_counts();
        assert_eq!(op_counts().total(), 0);
    }
}
