//! Synthetic interaction logs with planted interest clusters.
//!
//! Items are partitioned into `n_clusters` contiguous blocks (`i0..` belong
//! to cluster 0 and so on). Each user prefers one or two clusters; every
//! behavior comes from a preferred cluster with probability
//! `1 − noise_rate` and from the whole catalog otherwise.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Interaction, InteractionLog};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    pub seq_len: usize,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 2000,
            n_items: 400,
            n_clusters: 8,
            seq_len: 20,
            noise_rate: 0.3,
            seed: 0,
        }
    }
}

/// Generated log plus the ground truth used to build it.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub log: InteractionLog,
    /// Preferred clusters of user `u{k}`, indexed by `k`.
    pub preferred: Vec<Vec<usize>>,
    pub cluster_size: usize,
}

impl Synthetic {
    /// Cluster of an item id of the form `i{k}`.
    pub fn cluster_of(&self, item_id: &str) -> Option<usize> {
        let k: usize = item_id.strip_prefix('i')?.parse().ok()?;
        Some(k / self.cluster_size)
    }
}

impl SyntheticConfig {
    pub fn generate(&self) -> Result<Synthetic> {
        if self.n_clusters == 0 || !self.n_items.is_multiple_of(self.n_clusters) {
            return Err(Error::Config(format!(
                "{} items cannot be split into {} equal clusters",
                self.n_items, self.n_clusters
            )));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!("noise rate {} outside [0, 1)", self.noise_rate)));
        }
        if self.n_users == 0 || self.seq_len == 0 {
            return Err(Error::EmptyDataset);
        }
        let cluster_size = self.n_items / self.n_clusters;
        let mut rng = rng::from_seed(self.seed);
        let mut records = Vec::with_capacity(self.n_users * self.seq_len);
        let mut preferred = Vec::with_capacity(self.n_users);
        let mut clock = 0u64;
        for u in 0..self.n_users {
            let n_pref = if self.n_clusters > 1 && rng.random_bool(0.5) {
                2
            } else {
                1
            };
            let clusters = index::sample(&mut rng, self.n_clusters, n_pref).into_vec();
            for _ in 0..self.seq_len {
                let item = if rng.random::<f64>() < self.noise_rate {
                    rng.random_range(0..self.n_items)
                } else {
                    let c = clusters[rng.random_range(0..clusters.len())];
                    c * cluster_size + rng.random_range(0..cluster_size)
                };
                records.push(Interaction {
                    user: format!("u{u}"),
                    item: format!("i{item}"),
                    timestamp: clock,
                });
                clock += 1;
            }
            preferred.push(clusters);
        }
        Ok(Synthetic {
            log: InteractionLog::from_interactions(records),
            preferred,
            cluster_size,
        })
    }
}

pub fn gen_synthetic(
    n_users: usize,
    n_items: usize,
    n_clusters: usize,
    seq_len: usize,
    noise_rate: f64,
    seed: u64,
) -> Result<InteractionLog> {
    SyntheticConfig {
        n_users,
        n_items,
        n_clusters,
        seq_len,
        noise_rate,
        seed,
    }
    .generate()
    .map(|s| s.log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_behaviors_stay_in_preferred_clusters() {
        let syn = SyntheticConfig {
            n_users: 50,
            n_items: 40,
            n_clusters: 4,
            seq_len: 15,
            noise_rate: 0.0,
            seed: 9,
        }
        .generate()
        .unwrap();
        for it in syn.log.interactions() {
            let u: usize = it.user[1..].parse().unwrap();
            let c = syn.cluster_of(&it.item).unwrap();
            assert!(syn.preferred[u].contains(&c));
        }
    }

    #[test]
    fn same_seed_same_log() {
        let a = gen_synthetic(30, 20, 4, 10, 0.3, 5).unwrap();
        let b = gen_synthetic(30, 20, 4, 10, 0.3, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic(30, 20, 4, 10, 0.3, 6).unwrap());
    }

    #[test]
    fn interaction_count() {
        let log = gen_synthetic(1000, 400, 8, 20, 0.3, 1).unwrap();
        assert_eq!(log.n_interactions(), 20_000);
        assert_eq!(log.n_users(), 1000);
    }

    #[test]
    fn rejects_uneven_clusters() {
        assert!(gen_synthetic(10, 10, 3, 5, 0.1, 0).is_err());
        assert!(gen_synthetic(10, 10, 2, 5, 1.0, 0).is_err());
    }
}
