use super::{
    count, interest_concept_scores, item_concept_scores, plan_replacement, split_concepts,
    ConceptMemory, MemoryEntry, VariantConfig,
};
use crate::error::{Error, Result};
use crate::model::{embed_items, interest_concepts, mlp, EncoderLevel, ITEM_EMBEDDINGS};
use crate::numkit::{Dense1, Tape, Var};
use crate::rng::Rng;

/// One FIFO memory per concept level.
#[derive(Clone, Debug, PartialEq)]
pub struct Memories {
    pub item: ConceptMemory,
    pub interest: ConceptMemory,
}

impl Memories {
    pub fn new(capacity: usize, n_items: usize, dim: usize) -> Self {
        Self {
            item: ConceptMemory::item_level(capacity, n_items),
            interest: ConceptMemory::interest_level(capacity, dim),
        }
    }
}

/// User representations (`1 × d` nodes) produced for one training example.
pub struct Synthesis {
    pub observational: Var,
    pub positives: Vec<Var>,
    pub negatives: Vec<Var>,
    /// The observational `K × d` interest concepts, for interest-level
    /// encoders.
    pub concepts: Option<Var>,
}

/// Builds the observational representation together with `M` positive and
/// `N` negative counterfactual representations.
///
/// Scores are read from detached values. All representations share one
/// perceptron pass over stacked pooled inputs, which gives the same bits as
/// encoding each one separately.
pub fn synthesize_counterfactuals(
    tape: &mut Tape,
    behavior_ids: &[usize],
    target: usize,
    cfg: &VariantConfig,
    memories: &mut Memories,
    rng: &mut Rng,
) -> Result<Synthesis> {
    cfg.validate()?;
    if behavior_ids.len() < 2 {
        return Err(Error::SequenceTooShort {
            len: behavior_ids.len(),
            min: 2,
        });
    }
    let table = tape.params().get(ITEM_EMBEDDINGS);
    if target >= table.rows() {
        return Err(Error::Vocabulary {
            index: target,
            size: table.rows(),
        });
    }
    count(|c| c.syntheses += 1);
    let y = Dense1::new(table.row(target).to_vec());
    let encoder = cfg.variant.encoder();
    let counts = cfg.level_counts();

    let x = embed_items(tape, behavior_ids)?;
    let item_scores = item_concept_scores(tape.value(x), &y)?;
    let concepts = match encoder {
        EncoderLevel::Item => None,
        EncoderLevel::Interest => Some(interest_concepts(tape, x)?),
    };
    let observational = match &concepts {
        None => tape.mean_rows(x)?,
        Some(ic) => tape.mean_rows(ic.concepts)?,
    };

    let mut positives = Vec::with_capacity(cfg.m);
    let mut negatives = Vec::with_capacity(cfg.n);

    if counts.item_positives + counts.item_negatives > 0 {
        let split = split_concepts(&item_scores)?;
        let mut item_cf = |tape: &mut Tape, set: &[usize]| -> Result<Var> {
            let mut ids = behavior_ids.to_vec();
            for (pos, entry) in plan_replacement(set, cfg.r_rep, &mut memories.item, rng)? {
                match entry {
                    MemoryEntry::Item(id) => ids[pos] = id,
                    MemoryEntry::Vector(_) => unreachable!("item memory holds item ids"),
                }
            }
            let xc = embed_items(tape, &ids)?;
            match encoder {
                EncoderLevel::Item => tape.mean_rows(xc),
                EncoderLevel::Interest => {
                    let ic = interest_concepts(tape, xc)?;
                    tape.mean_rows(ic.concepts)
                }
            }
        };
        for _ in 0..counts.item_positives {
            positives.push(item_cf(tape, &split.dispensable)?);
        }
        for _ in 0..counts.item_negatives {
            negatives.push(item_cf(tape, &split.indispensable)?);
        }
    }

    if counts.interest_positives + counts.interest_negatives > 0 {
        let ic = concepts
            .as_ref()
            .expect("interest-level counterfactuals need an interest encoder");
        let scores = interest_concept_scores(&ic.attention_matrix(tape), &item_scores)?;
        let split = split_concepts(&scores)?;
        let c = ic.concepts;
        let mut interest_cf = |tape: &mut Tape, set: &[usize]| -> Result<Var> {
            let mut rows = Vec::new();
            for (pos, entry) in plan_replacement(set, cfg.r_rep, &mut memories.interest, rng)? {
                match entry {
                    MemoryEntry::Vector(v) => rows.push((pos, v)),
                    MemoryEntry::Item(_) => unreachable!("interest memory holds vectors"),
                }
            }
            let cc = tape.replace_rows(c, &rows)?;
            tape.mean_rows(cc)
        };
        for _ in 0..counts.interest_positives {
            positives.push(interest_cf(tape, &split.dispensable)?);
        }
        for _ in 0..counts.interest_negatives {
            negatives.push(interest_cf(tape, &split.indispensable)?);
        }
    }

    let mut pooled = Vec::with_capacity(1 + positives.len() + negatives.len());
    pooled.push(observational);
    pooled.extend_from_slice(&positives);
    pooled.extend_from_slice(&negatives);
    let stacked = tape.stack(&pooled)?;
    let reps = mlp(tape, stacked)?;
    let n_pos = positives.len();
    let observational = tape.row(reps, 0);
    let positives = (0..n_pos).map(|i| tape.row(reps, 1 + i)).collect();
    let negatives = (0..negatives.len())
        .map(|i| tape.row(reps, 1 + n_pos + i))
        .collect();
    Ok(Synthesis {
        observational,
        positives,
        negatives,
        concepts: concepts.map(|ic| ic.concepts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{user_rep_interest_level, user_rep_item_level, ModelConfig, ModelParams, Variant};
    use crate::numkit::Grads;
    use crate::rng;

    fn params() -> ModelParams {
        ModelParams::init(
            ModelConfig {
                n_items: 20,
                dim: 6,
                hidden: 8,
                attn_dim: 5,
                n_concepts: 4,
            },
            2,
        )
        .unwrap()
    }

    fn run(variant: Variant, m: usize, n: usize) -> (usize, usize, bool) {
        let p = params();
        let mut cfg = VariantConfig::new(variant);
        cfg.m = m;
        cfg.n = n;
        cfg.k = 4;
        let mut mem = Memories::new(64, 20, 6);
        let mut tape = Tape::new(&p.set);
        let mut r = rng::from_seed(0);
        let s = synthesize_counterfactuals(&mut tape, &[1, 2, 3, 4, 5], 9, &cfg, &mut mem, &mut r)
            .unwrap();
        (s.positives.len(), s.negatives.len(), s.concepts.is_some())
    }

    #[test]
    fn counts_per_variant() {
        assert_eq!(run(Variant::Item, 1, 8), (1, 8, false));
        assert_eq!(run(Variant::Interest, 1, 8), (1, 8, true));
        assert_eq!(run(Variant::Hierarchical, 2, 16), (2, 16, true));
    }

    #[test]
    fn observational_matches_backbone() {
        let p = params();
        for variant in [Variant::Item, Variant::Interest, Variant::Hierarchical] {
            let mut cfg = VariantConfig::new(variant);
            cfg.k = 4;
            let ids = [3, 1, 4, 1, 5, 9];
            let mut tape = Tape::new(&p.set);
            let mut mem = Memories::new(64, 20, 6);
            let mut r = rng::from_seed(4);
            let s = synthesize_counterfactuals(&mut tape, &ids, 2, &cfg, &mut mem, &mut r).unwrap();
            let got = tape.value(s.observational).clone();
            let mut base = Tape::new(&p.set);
            let x = embed_items(&mut base, &ids).unwrap();
            let u = match variant.encoder() {
                EncoderLevel::Item => user_rep_item_level(&mut base, x).unwrap(),
                EncoderLevel::Interest => {
                    let ic = interest_concepts(&mut base, x).unwrap();
                    user_rep_interest_level(&mut base, ic.concepts).unwrap()
                }
            };
            assert_eq!(&got, base.value(u), "{variant:?}");
        }
    }

    #[test]
    fn identity_replacement_reproduces_observational() {
        let p = params();
        let mut cfg = VariantConfig::new(Variant::Item);
        cfg.r_rep = 1.0;
        cfg.n = 1;
        let ids = [3usize, 7, 1, 12];
        let y = Dense1::new(p.item_table().row(5).to_vec());
        let x = p.item_table();
        let rows: Vec<Vec<f64>> = ids.iter().map(|&i| x.row(i).to_vec()).collect();
        let scores = item_concept_scores(&crate::numkit::Dense2::from_rows(&rows), &y).unwrap();
        let split = split_concepts(&scores).unwrap();
        let mut mem = Memories::new(64, 20, 6);
        mem.item
            .enqueue(split.dispensable.iter().map(|&pos| MemoryEntry::Item(ids[pos])))
            .unwrap();
        let mut tape = Tape::new(&p.set);
        let mut r = rng::from_seed(1);
        let s = synthesize_counterfactuals(&mut tape, &ids, 5, &cfg, &mut mem, &mut r).unwrap();
        assert_eq!(tape.value(s.positives[0]), tape.value(s.observational));
    }

    #[test]
    fn too_short_is_reported() {
        let p = params();
        let cfg = VariantConfig::new(Variant::Item);
        let mut tape = Tape::new(&p.set);
        let mut mem = Memories::new(8, 20, 6);
        let mut r = rng::from_seed(1);
        assert!(matches!(
            synthesize_counterfactuals(&mut tape, &[1], 2, &cfg, &mut mem, &mut r),
            Err(Error::SequenceTooShort { len: 1, min: 2 })
        ));
    }

    #[test]
    fn counterfactuals_carry_gradients() {
        let p = params();
        let cfg = VariantConfig::new(Variant::Hierarchical);
        let mut tape = Tape::new(&p.set);
        let mut mem = Memories::new(8, 20, 6);
        let mut r = rng::from_seed(1);
        let s = synthesize_counterfactuals(&mut tape, &[1, 2, 3, 4], 6, &cfg, &mut mem, &mut r)
            .unwrap();
        let parts: Vec<Var> = s.positives.iter().chain(&s.negatives).copied().collect();
        let stacked = tape.stack(&parts).unwrap();
        let total = tape.sum(stacked);
        let mut g = Grads::zeros_like(&p.set);
        tape.backward(total, 1.0, &mut g).unwrap();
        assert!(!g.is_all_zero());
    }
}
