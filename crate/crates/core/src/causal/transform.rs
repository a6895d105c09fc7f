use rand::seq::index::sample;

use super::{count, ConceptMemory, ConceptSequence, MemoryEntry};
use crate::error::{Error, Result};
use crate::numkit::Dense2;
use crate::rng::Rng;

/// Number of positions replaced out of `set_len` eligible ones.
pub fn replacement_count(set_len: usize, r_rep: f64) -> usize {
    // The tolerance keeps products like 0.6 * 5 from rounding up to 4.
    ((r_rep * set_len as f64 - 1e-9).ceil() as usize).clamp(1, set_len)
}

pub(crate) fn check_rate(r_rep: f64) -> Result<()> {
    if r_rep.is_finite() && r_rep > 0.0 && r_rep <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidRate(r_rep))
    }
}

/// Picks the positions to replace and draws one substitute per position.
/// Positions come back in ascending order, and substitutes are drawn in that
/// order.
pub fn plan_replacement(
    replace_set: &[usize],
    r_rep: f64,
    mem: &mut ConceptMemory,
    rng: &mut Rng,
) -> Result<Vec<(usize, MemoryEntry)>> {
    check_rate(r_rep)?;
    if replace_set.is_empty() {
        return Err(Error::EmptyInput("replacement set"));
    }
    count(|c| c.transforms += 1);
    let k = replacement_count(replace_set.len(), r_rep);
    let mut chosen: Vec<usize> = sample(rng, replace_set.len(), k)
        .into_iter()
        .map(|i| replace_set[i])
        .collect();
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|pos| (pos, mem.draw_substitute(rng)))
        .collect())
}

/// Replaces `⌈r_rep·|replace_set|⌉` randomly chosen members of `replace_set`
/// with substitutes from `mem`. Item substitutes are looked up in
/// `item_table`.
pub fn counterfactual_transform(
    seq: &ConceptSequence,
    replace_set: &[usize],
    r_rep: f64,
    mem: &mut ConceptMemory,
    rng: &mut Rng,
    item_table: &Dense2,
) -> Result<ConceptSequence> {
    check_rate(r_rep)?;
    if mem.level() != seq.level {
        return Err(Error::MemoryKind {
            expected: seq.level.name(),
            got: mem.level().name(),
        });
    }
    if let Some(&bad) = replace_set.iter().find(|&&i| i >= seq.len()) {
        return Err(Error::Vocabulary {
            index: bad,
            size: seq.len(),
        });
    }
    let plan = plan_replacement(replace_set, r_rep, mem, rng)?;
    let mut out = seq.clone();
    for (pos, entry) in plan {
        match entry {
            MemoryEntry::Item(id) => {
                if id >= item_table.rows() {
                    return Err(Error::Vocabulary {
                        index: id,
                        size: item_table.rows(),
                    });
                }
                if item_table.cols() != out.vectors.cols() {
                    return Err(Error::Dimension {
                        op: "counterfactual_transform",
                        left: out.vectors.shape(),
                        right: item_table.shape(),
                    });
                }
                out.vectors.row_mut(pos).copy_from_slice(item_table.row(id));
                if let Some(ids) = out.source_ids.as_mut() {
                    ids[pos] = id;
                }
            }
            MemoryEntry::Vector(v) => {
                if v.len() != out.vectors.cols() {
                    return Err(Error::Dimension {
                        op: "counterfactual_transform",
                        left: out.vectors.shape(),
                        right: (1, v.len()),
                    });
                }
                out.vectors.row_mut(pos).copy_from_slice(&v);
            }
        }
    }
    Ok(out)
}
