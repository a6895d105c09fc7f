use serde::{Deserialize, Serialize};

use super::count;
use crate::error::{Error, Result};
use crate::numkit::{dot, Dense1, Dense2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptLevel {
    Item,
    Interest,
}

impl ConceptLevel {
    pub fn name(self) -> &'static str {
        match self {
            ConceptLevel::Item => "item",
            ConceptLevel::Interest => "interest",
        }
    }
}

/// An ordered list of concept vectors with their scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptSequence {
    pub level: ConceptLevel,
    /// `t × d` (item level) or `K × d` (interest level).
    pub vectors: Dense2,
    /// Item indices behind each row; item level only.
    pub source_ids: Option<Vec<usize>>,
    pub scores: Dense1,
}

impl ConceptSequence {
    pub fn item_level(vectors: Dense2, ids: Vec<usize>, scores: Dense1) -> Result<Self> {
        if ids.len() != vectors.rows() || scores.len() != vectors.rows() {
            return Err(Error::Dimension {
                op: "item concept sequence",
                left: vectors.shape(),
                right: (ids.len(), scores.len()),
            });
        }
        Ok(Self {
            level: ConceptLevel::Item,
            vectors,
            source_ids: Some(ids),
            scores,
        })
    }

    pub fn interest_level(vectors: Dense2, scores: Dense1) -> Result<Self> {
        if scores.len() != vectors.rows() {
            return Err(Error::Dimension {
                op: "interest concept sequence",
                left: vectors.shape(),
                right: (scores.len(), 1),
            });
        }
        Ok(Self {
            level: ConceptLevel::Interest,
            vectors,
            source_ids: None,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }
}

/// Indices of the indispensable (top-scored) and dispensable concepts, each
/// in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConceptSplit {
    pub indispensable: Vec<usize>,
    pub dispensable: Vec<usize>,
}

/// `p_i = ⟨X_i, y⟩` on plain values; nothing here is differentiated.
pub fn item_concept_scores(x: &Dense2, y: &Dense1) -> Result<Dense1> {
    count(|c| c.scoring += 1);
    if x.rows() < 2 {
        return Err(Error::SequenceTooShort {
            len: x.rows(),
            min: 2,
        });
    }
    if x.cols() != y.len() {
        return Err(Error::Dimension {
            op: "item_concept_scores",
            left: x.shape(),
            right: (1, y.len()),
        });
    }
    Ok(Dense1::new(
        (0..x.rows()).map(|i| dot(x.row(i), y.data())).collect(),
    ))
}

/// `P = Aᵀ p` for a `t × K` attention matrix and `t` item scores.
pub fn interest_concept_scores(attention: &Dense2, item_scores: &Dense1) -> Result<Dense1> {
    count(|c| c.scoring += 1);
    if attention.rows() != item_scores.len() {
        return Err(Error::Dimension {
            op: "interest_concept_scores",
            left: attention.shape(),
            right: (item_scores.len(), 1),
        });
    }
    let mut out = vec![0.0; attention.cols()];
    for i in 0..attention.rows() {
        let p = item_scores[i];
        for (k, o) in out.iter_mut().enumerate() {
            *o += attention.get(i, k) * p;
        }
    }
    Ok(Dense1::new(out))
}

/// The `⌈n/2⌉` highest-scored concepts are indispensable; equal scores are
/// ranked by position, earlier first.
pub fn split_concepts(scores: &Dense1) -> Result<ConceptSplit> {
    count(|c| c.splitting += 1);
    let n = scores.len();
    if n < 2 {
        return Err(Error::SequenceTooShort { len: n, min: 2 });
    }
    if scores.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("concept scores"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let top = n.div_ceil(2);
    let mut indispensable = order[..top].to_vec();
    let mut dispensable = order[top..].to_vec();
    indispensable.sort_unstable();
    dispensable.sort_unstable();
    Ok(ConceptSplit {
        indispensable,
        dispensable,
    })
}
