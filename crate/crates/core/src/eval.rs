//! Exact top-N retrieval and ranking metrics.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{EvalExample, EvalSet};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Popularity, Variant};
use crate::numkit::{dot, Dense1, Dense2};

pub const DEFAULT_CUTOFFS: [usize; 2] = [20, 50];

/// The `n` items with the largest inner product with `u`, skipping
/// `exclude`, ordered by score descending and then index ascending.
pub fn topn_retrieve(
    u: &Dense1,
    item_table: &Dense2,
    n: usize,
    exclude: &BTreeSet<usize>,
) -> Result<Vec<usize>> {
    if u.len() != item_table.cols() {
        return Err(Error::Dimension {
            op: "topn_retrieve",
            left: (1, u.len()),
            right: item_table.shape(),
        });
    }
    let excluded = exclude.iter().filter(|&&i| i < item_table.rows()).count();
    let available = item_table.rows() - excluded;
    if n > available {
        return Err(Error::TooManyRequested {
            requested: n,
            available,
        });
    }
    let mut scored: Vec<(f64, usize)> = (0..item_table.rows())
        .filter(|i| !exclude.contains(i))
        .map(|i| (dot(u.data(), item_table.row(i)), i))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if n < scored.len() && n > 0 {
        scored.select_nth_unstable_by(n - 1, order);
        scored.truncate(n);
    }
    scored.sort_unstable_by(order);
    scored.truncate(n);
    Ok(scored.into_iter().map(|(_, i)| i).collect())
}

fn hits(topn: &[usize], targets: &BTreeSet<usize>) -> usize {
    topn.iter().filter(|i| targets.contains(i)).count()
}

fn nonempty(targets: &BTreeSet<usize>) -> Result<()> {
    if targets.is_empty() {
        Err(Error::EmptyInput("target set"))
    } else {
        Ok(())
    }
}

/// `|topn ∩ targets| / |targets|`.
pub fn recall_at(topn: &[usize], targets: &BTreeSet<usize>) -> Result<f64> {
    nonempty(targets)?;
    Ok(hits(topn, targets) as f64 / targets.len() as f64)
}

/// Binary-relevance NDCG; the ideal ranking places `min(|targets|, n)` hits
/// first.
pub fn ndcg_at(topn: &[usize], targets: &BTreeSet<usize>) -> Result<f64> {
    nonempty(targets)?;
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = topn
        .iter()
        .enumerate()
        .filter(|(_, i)| targets.contains(i))
        .map(|(r, _)| discount(r + 1))
        .sum();
    let ideal = targets.len().min(topn.len());
    if ideal == 0 {
        return Ok(0.0);
    }
    let idcg: f64 = (1..=ideal).map(discount).sum();
    Ok(dcg / idcg)
}

/// 1 when any target is retrieved.
pub fn hitrate_at(topn: &[usize], targets: &BTreeSet<usize>) -> Result<f64> {
    nonempty(targets)?;
    Ok(if hits(topn, targets) > 0 { 1.0 } else { 0.0 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffMetrics {
    pub cutoff: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub hitrate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub metrics: Vec<CutoffMetrics>,
    pub n_users_evaluated: usize,
    pub n_users_skipped: usize,
}

impl MetricsReport {
    pub fn at(&self, cutoff: usize) -> Option<&CutoffMetrics> {
        self.metrics.iter().find(|m| m.cutoff == cutoff)
    }

    pub fn recall_at(&self, cutoff: usize) -> Option<f64> {
        self.at(cutoff).map(|m| m.recall)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// One header line and one row: Recall, NDCG and HR for each cutoff.
    pub fn to_table(&self) -> String {
        let mut header = format!("{:<16}", "model");
        let mut row = format!("{:<16}", self.model);
        for m in &self.metrics {
            for (name, v) in [("Recall", m.recall), ("NDCG", m.ndcg), ("HR", m.hitrate)] {
                let label = format!("{name}@{}", m.cutoff);
                let _ = write!(header, " {label:>10}");
                let _ = write!(row, " {:>10.4}", v);
            }
        }
        format!("{header}\n{row}\n")
    }
}

fn check_cutoffs(cutoffs: &[usize]) -> Result<usize> {
    match cutoffs.iter().max() {
        Some(&max) if !cutoffs.contains(&0) => Ok(max),
        _ => Err(Error::Config("cutoffs must be a nonempty list of positive counts".into())),
    }
}

/// Averages per-user metrics over `set`, given a ranking function that
/// returns at least `max(cutoffs)` items where possible.
pub fn evaluate_rankings<F>(
    model: &str,
    set: &EvalSet,
    cutoffs: &[usize],
    mut rank: F,
) -> Result<MetricsReport>
where
    F: FnMut(&EvalExample, usize) -> Result<Vec<usize>>,
{
    let max_cut = check_cutoffs(cutoffs)?;
    if set.examples.is_empty() {
        return Err(Error::EmptyInput("evaluation examples"));
    }
    let mut sums = vec![[0.0f64; 3]; cutoffs.len()];
    for ex in &set.examples {
        let targets = ex.target_set();
        let ranked = rank(ex, max_cut)?;
        for (acc, &c) in sums.iter_mut().zip(cutoffs) {
            let top = &ranked[..c.min(ranked.len())];
            acc[0] += recall_at(top, &targets)?;
            acc[1] += ndcg_at(top, &targets)?;
            acc[2] += hitrate_at(top, &targets)?;
        }
    }
    let n = set.examples.len() as f64;
    Ok(MetricsReport {
        model: model.to_string(),
        metrics: cutoffs
            .iter()
            .zip(sums)
            .map(|(&cutoff, s)| CutoffMetrics {
                cutoff,
                recall: s[0] / n,
                ndcg: s[1] / n,
                hitrate: s[2] / n,
            })
            .collect(),
        n_users_evaluated: set.examples.len(),
        n_users_skipped: set.skipped,
    })
}

/// Serving-time evaluation: encodes each prefix with the variant's backbone
/// encoder and retrieves from the full item table, skipping prefix items.
pub fn evaluate(
    params: &ModelParams,
    variant: Variant,
    set: &EvalSet,
    cutoffs: &[usize],
) -> Result<MetricsReport> {
    let table = params.item_table();
    evaluate_rankings(variant.name(), set, cutoffs, |ex, n| {
        let u = params.user_vector(variant.encoder(), &ex.prefix)?;
        let exclude: BTreeSet<usize> = ex.prefix.iter().copied().collect();
        let n = n.min(table.rows() - exclude.len());
        topn_retrieve(&u, table, n, &exclude)
    })
}

/// Evaluation of the popularity baseline.
pub fn evaluate_popularity(pop: &Popularity, set: &EvalSet, cutoffs: &[usize]) -> Result<MetricsReport> {
    evaluate_rankings("pop", set, cutoffs, |ex, n| Ok(pop.retrieve(n, &ex.prefix)))
}
