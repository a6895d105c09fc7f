//! Fixtures shared by the benchmarks.

use cfrec_core::causal::{Memories, VariantConfig};
use cfrec_core::data::TrainingExample;
use cfrec_core::model::{ModelConfig, ModelParams, Variant};
use cfrec_core::numkit::Dense2;
use cfrec_core::rng;
use cfrec_core::trainer::{sample_negatives, PreparedExample};

/// Deterministic values spread over `[-0.5, 0.5)`.
pub fn matrix(rows: usize, cols: usize, salt: usize) -> Dense2 {
    let data = (0..rows * cols)
        .map(|i| ((i * 7919 + salt * 104_729) % 1000) as f64 / 1000.0 - 0.5)
        .collect();
    Dense2::from_vec(rows, cols, data).expect("shape matches data")
}

/// Default-sized encoder over `n_items`.
pub fn model(n_items: usize) -> ModelParams {
    ModelParams::init(ModelConfig::new(n_items), 0).expect("valid config")
}

pub fn prefix(len: usize, n_items: usize, salt: usize) -> Vec<usize> {
    (0..len).map(|i| (i * 31 + salt * 17) % n_items).collect()
}

/// `size` examples with 20-item prefixes, as the trainer sees them.
pub fn examples(size: usize, n_items: usize) -> Vec<TrainingExample> {
    (0..size)
        .map(|u| TrainingExample {
            user: u,
            prefix: prefix(20, n_items, u),
            target: (u * 13 + 5) % n_items,
        })
        .collect()
}

pub fn prepare(examples: &[TrainingExample], n_items: usize) -> Vec<PreparedExample<'_>> {
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| PreparedExample {
            example: ex,
            negatives: sample_negatives(n_items, ex.target, 10, &mut rng::stream(0, &[2, i as u64]))
                .expect("vocabulary is large enough"),
            cf_rng: rng::stream(0, &[3, i as u64]),
        })
        .collect()
}

/// Memories already holding every item once.
pub fn warm_memories(variant: Variant, params: &ModelParams) -> (VariantConfig, Memories) {
    let vcfg = VariantConfig::new(variant);
    let mut mem = Memories::new(vcfg.memory_capacity, params.n_items(), params.config.dim);
    mem.item
        .enqueue((0..params.n_items()).map(cfrec_core::causal::MemoryEntry::Item))
        .expect("item ids are in range");
    (vcfg, mem)
}
