use crate::data::InteractionLog;

/// Recommends the globally most interacted items. No learned parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Popularity {
    counts: Vec<usize>,
    /// Items by count descending, index ascending.
    ranking: Vec<usize>,
}

impl Popularity {
    /// Counts interactions of the given users.
    pub fn fit(log: &InteractionLog, users: &[String]) -> Self {
        Self::from_counts(log.item_counts(users))
    }

    pub fn from_counts(counts: Vec<usize>) -> Self {
        let mut ranking: Vec<usize> = (0..counts.len()).collect();
        ranking.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        Self { counts, ranking }
    }

    pub fn count(&self, item: usize) -> usize {
        self.counts[item]
    }

    pub fn n_items(&self) -> usize {
        self.counts.len()
    }

    /// Top `n` items not in `exclude`.
    pub fn retrieve(&self, n: usize, exclude: &[usize]) -> Vec<usize> {
        self.ranking
            .iter()
            .copied()
            .filter(|i| !exclude.contains(i))
            .take(n)
            .collect()
    }
}
