//! Interaction logs and the example construction used for training and
//! evaluation.

mod synthetic;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use synthetic::{gen_synthetic, Synthetic, SyntheticConfig};

/// One `(user, item, timestamp)` record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: u64,
}

/// A user's behaviors in chronological order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserHistory {
    pub id: String,
    /// Vocabulary indices, oldest first.
    pub items: Vec<usize>,
    /// Positions of the matching records in [`InteractionLog::interactions`].
    interactions: Vec<usize>,
}

/// A dataset with per-user chronological histories and a dense item
/// vocabulary.
///
/// Users and items are indexed in order of first appearance. Histories are
/// sorted by timestamp with ties kept in input order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionLog {
    interactions: Vec<Interaction>,
    users: Vec<UserHistory>,
    user_index: HashMap<String, usize>,
    items: Vec<String>,
    item_index: HashMap<String, usize>,
}

impl InteractionLog {
    pub fn from_interactions(interactions: Vec<Interaction>) -> Self {
        let mut users: Vec<UserHistory> = Vec::new();
        let mut user_index = HashMap::new();
        let mut items = Vec::new();
        let mut item_index = HashMap::new();
        for (pos, it) in interactions.iter().enumerate() {
            let u = *user_index.entry(it.user.clone()).or_insert_with(|| {
                users.push(UserHistory {
                    id: it.user.clone(),
                    items: Vec::new(),
                    interactions: Vec::new(),
                });
                users.len() - 1
            });
            item_index.entry(it.item.clone()).or_insert_with(|| {
                items.push(it.item.clone());
                items.len() - 1
            });
            users[u].interactions.push(pos);
        }
        for user in &mut users {
            // stable: equal timestamps keep file order
            user.interactions
                .sort_by_key(|&pos| interactions[pos].timestamp);
            user.items = user
                .interactions
                .iter()
                .map(|&pos| item_index[&interactions[pos].item])
                .collect();
        }
        Self {
            interactions,
            users,
            user_index,
            items,
            item_index,
        }
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn users(&self) -> &[UserHistory] {
        &self.users
    }

    pub fn user(&self, id: &str) -> Option<&UserHistory> {
        self.user_index.get(id).map(|&u| &self.users[u])
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Original id of vocabulary entry `index`.
    pub fn item_id(&self, index: usize) -> &str {
        &self.items[index]
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    /// Interactions / (users × items).
    pub fn density(&self) -> f64 {
        if self.users.is_empty() || self.items.is_empty() {
            return 0.0;
        }
        self.interactions.len() as f64 / (self.users.len() as f64 * self.items.len() as f64)
    }

    /// Item counts indexed by vocabulary, over the given users only.
    pub fn item_counts(&self, users: &[String]) -> Vec<usize> {
        let mut counts = vec![0; self.items.len()];
        for id in users {
            if let Some(u) = self.user(id) {
                for &i in &u.items {
                    counts[i] += 1;
                }
            }
        }
        counts
    }

    fn retain(&self, keep: impl Fn(usize) -> bool) -> Self {
        let kept = self
            .interactions
            .iter()
            .enumerate()
            .filter(|(pos, _)| keep(*pos))
            .map(|(_, it)| it.clone())
            .collect();
        Self::from_interactions(kept)
    }

    /// Writes `user<TAB>item<TAB>timestamp` lines in record order.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.interactions.len() * 24);
        for it in &self.interactions {
            writeln!(out, "{}\t{}\t{}", it.user, it.item, it.timestamp)
                .map_err(|e| Error::io(path, e))?;
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Parses a headerless UTF-8 TSV of `user<TAB>item<TAB>timestamp` lines.
/// Blank lines are ignored.
pub fn parse_interactions(text: &str, origin: &str) -> Result<InteractionLog> {
    let mut records = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: n + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(err("empty user or item id".into()));
        }
        let timestamp = fields[2]
            .trim()
            .parse::<u64>()
            .map_err(|e| err(format!("bad timestamp `{}`: {e}", fields[2])))?;
        records.push(Interaction {
            user: fields[0].to_string(),
            item: fields[1].to_string(),
            timestamp,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(InteractionLog::from_interactions(records))
}

pub fn load_interactions(path: &Path) -> Result<InteractionLog> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text, &path.display().to_string())
}

/// Repeatedly drops users and items with fewer than `k` interactions until
/// every survivor has at least `k`. Duplicate records count separately.
pub fn k_core_filter(log: &InteractionLog, k: usize) -> InteractionLog {
    assert!(k >= 1, "k must be at least 1");
    let n = log.interactions.len();
    let user_of: Vec<usize> = log
        .interactions
        .iter()
        .map(|it| log.user_index[&it.user])
        .collect();
    let item_of: Vec<usize> = log
        .interactions
        .iter()
        .map(|it| log.item_index[&it.item])
        .collect();
    let mut alive = vec![true; n];
    let mut user_deg = vec![0usize; log.n_users()];
    let mut item_deg = vec![0usize; log.n_items()];
    for pos in 0..n {
        user_deg[user_of[pos]] += 1;
        item_deg[item_of[pos]] += 1;
    }
    loop {
        let mut changed = false;
        for pos in 0..n {
            if alive[pos] && (user_deg[user_of[pos]] < k || item_deg[item_of[pos]] < k) {
                alive[pos] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        user_deg.iter_mut().for_each(|d| *d = 0);
        item_deg.iter_mut().for_each(|d| *d = 0);
        for pos in (0..n).filter(|&p| alive[p]) {
            user_deg[user_of[pos]] += 1;
            item_deg[item_of[pos]] += 1;
        }
    }
    log.retain(|pos| alive[pos])
}

/// Keeps each user's `max_len` most recent behaviors.
pub fn truncate_histories(log: &InteractionLog, max_len: usize) -> InteractionLog {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut keep = vec![false; log.interactions.len()];
    for u in &log.users {
        let start = u.interactions.len().saturating_sub(max_len);
        for &pos in &u.interactions[start..] {
            keep[pos] = true;
        }
    }
    log.retain(|pos| keep[pos])
}

/// Disjoint train/validation/test user groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded shuffle of the users followed by a contiguous cut with sizes
/// `⌊n·a/s⌋`, `⌊n·b/s⌋` and the remainder, where `s = a + b + c`.
pub fn split_users(log: &InteractionLog, ratios: (u32, u32, u32), seed: u64) -> Result<UserSplit> {
    let (a, b, c) = ratios;
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::Config(format!("split ratios must be positive, got {a}:{b}:{c}")));
    }
    let n = log.n_users();
    if n < 3 {
        return Err(Error::TooFewUsers(n));
    }
    let mut ids: Vec<String> = log.users.iter().map(|u| u.id.clone()).collect();
    ids.shuffle(&mut rng::from_seed(seed));
    let total = (a + b + c) as usize;
    let n_train = n * a as usize / total;
    let n_val = n * b as usize / total;
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(UserSplit {
        train: ids,
        val,
        test,
    })
}

/// A next-item prediction example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    /// Index of the user in the source log.
    pub user: usize,
    pub prefix: Vec<usize>,
    pub target: usize,
}

/// Every position `t ≥ 2` of every listed user's history becomes an example
/// predicting item `t` from the (at most `max_len`) items before it. Users
/// are visited in log order, positions in chronological order.
pub fn make_training_examples(
    log: &InteractionLog,
    users: &[String],
    max_len: usize,
) -> Result<Vec<TrainingExample>> {
    assert!(max_len >= 1, "max_len must be at least 1");
    let wanted = lookup_users(log, users)?;
    let mut out = Vec::new();
    for (u, hist) in log.users.iter().enumerate() {
        if !wanted.contains(&u) {
            continue;
        }
        for t in 1..hist.items.len() {
            let start = t.saturating_sub(max_len);
            out.push(TrainingExample {
                user: u,
                prefix: hist.items[start..t].to_vec(),
                target: hist.items[t],
            });
        }
    }
    Ok(out)
}

fn lookup_users(log: &InteractionLog, users: &[String]) -> Result<HashSet<usize>> {
    users
        .iter()
        .map(|id| {
            log.user_index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Config(format!("user `{id}` is not in the dataset")))
        })
        .collect()
}

/// A held-out user: the leading share of their history is the input, the
/// remaining items are the relevant set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalExample {
    pub user: String,
    pub prefix: Vec<usize>,
    /// The held-out tail in chronological order; may repeat items.
    pub targets: Vec<usize>,
}

impl EvalExample {
    /// Distinct target items.
    pub fn target_set(&self) -> BTreeSet<usize> {
        self.targets.iter().copied().collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalSet {
    pub examples: Vec<EvalExample>,
    /// Users whose tail would have been empty.
    pub skipped: usize,
}

/// Splits each listed user's history into the first `⌈prefix_frac·T⌉`
/// behaviors and the rest. Users are visited in log order.
pub fn make_eval_examples(
    log: &InteractionLog,
    users: &[String],
    prefix_frac: f64,
) -> Result<EvalSet> {
    if !(prefix_frac > 0.0 && prefix_frac < 1.0) {
        return Err(Error::Config(format!("prefix fraction {prefix_frac} outside (0, 1)")));
    }
    let wanted = lookup_users(log, users)?;
    let mut set = EvalSet::default();
    for (u, hist) in log.users.iter().enumerate() {
        if !wanted.contains(&u) {
            continue;
        }
        let t = hist.items.len();
        // guard against 0.8·10 = 8.000000000000002
        let cut = ((prefix_frac * t as f64) - 1e-9).ceil().max(1.0) as usize;
        if cut >= t {
            set.skipped += 1;
            continue;
        }
        set.examples.push(EvalExample {
            user: hist.id.clone(),
            prefix: hist.items[..cut].to_vec(),
            targets: hist.items[cut..].to_vec(),
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(u: &str, i: &str, t: u64) -> Interaction {
        Interaction {
            user: u.into(),
            item: i.into(),
            timestamp: t,
        }
    }

    fn history(log: &InteractionLog, user: &str) -> Vec<String> {
        log.user(user)
            .unwrap()
            .items
            .iter()
            .map(|&i| log.item_id(i).to_string())
            .collect()
    }

    #[test]
    fn parse_orders_by_timestamp() {
        let log = parse_interactions("u\ta\t3\nu\tb\t1\nu\tc\t2\n", "mem").unwrap();
        assert_eq!(history(&log, "u"), ["b", "c", "a"]);
    }

    #[test]
    fn parse_keeps_duplicates_and_ties_in_file_order() {
        let log = parse_interactions("u\ta\t1\nu\ta\t1\nu\tb\t1\n", "mem").unwrap();
        assert_eq!(log.n_interactions(), 3);
        assert_eq!(history(&log, "u"), ["a", "a", "b"]);
    }

    #[test]
    fn parse_rejects_two_fields_with_line_number() {
        let err = parse_interactions("u\ta\t1\nu\tb\n", "f.tsv").unwrap_err();
        match err {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 2);
                assert_eq!(path, "f.tsv");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_interactions("u\ta\t-4\n", "f").unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn parse_empty_file() {
        assert!(matches!(parse_interactions("", "f"), Err(Error::EmptyDataset)));
        assert!(matches!(parse_interactions("\n\n", "f"), Err(Error::EmptyDataset)));
    }

    #[test]
    fn vocabulary_is_dense_bijection() {
        let log = parse_interactions("u\tx\t1\nv\ty\t1\nu\ty\t2\n", "m").unwrap();
        assert_eq!(log.n_items(), 2);
        for (i, id) in log.item_ids().iter().enumerate() {
            assert_eq!(log.item_index(id), Some(i));
        }
    }

    #[test]
    fn k_core_examples() {
        let chain = InteractionLog::from_interactions(vec![
            rec("u1", "i1", 0),
            rec("u1", "i2", 1),
            rec("u2", "i2", 2),
        ]);
        assert_eq!(k_core_filter(&chain, 1), chain);
        assert!(k_core_filter(&chain, 2).is_empty());

        let mut clique = Vec::new();
        for u in ["a", "b", "c"] {
            for i in ["x", "y", "z"] {
                clique.push(rec(u, i, 0));
            }
        }
        let clique = InteractionLog::from_interactions(clique);
        assert_eq!(k_core_filter(&clique, 3), clique);
        assert!(k_core_filter(&clique, 4).is_empty());
    }

    #[test]
    fn truncation_keeps_latest() {
        let recs: Vec<_> = (0..25).map(|t| rec("u", &format!("i{t}"), t)).collect();
        let log = InteractionLog::from_interactions(recs);
        let cut = truncate_histories(&log, 20);
        let h = history(&cut, "u");
        assert_eq!(h.len(), 20);
        assert_eq!(h[0], "i5");
        assert_eq!(h[19], "i24");
        let one = truncate_histories(&log, 1);
        assert_eq!(history(&one, "u"), ["i24"]);
        let short: Vec<_> = (0..5).map(|t| rec("v", &format!("i{t}"), t)).collect();
        let short = InteractionLog::from_interactions(short);
        assert_eq!(truncate_histories(&short, 20), short);
    }

    fn n_users(n: usize) -> InteractionLog {
        InteractionLog::from_interactions((0..n).map(|u| rec(&format!("u{u}"), "i", 0)).collect())
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split_users(&n_users(10), (8, 1, 1), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        let s = split_users(&n_users(12), (8, 1, 1), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (9, 1, 2));
        assert_eq!(s, split_users(&n_users(12), (8, 1, 1), 3).unwrap());
        assert!(matches!(
            split_users(&n_users(2), (8, 1, 1), 3),
            Err(Error::TooFewUsers(2))
        ));
    }

    #[test]
    fn training_windows() {
        let log = InteractionLog::from_interactions(vec![
            rec("u", "a", 0),
            rec("u", "b", 1),
            rec("u", "c", 2),
            rec("w", "a", 0),
        ]);
        let ex = make_training_examples(&log, &["u".into(), "w".into()], 20).unwrap();
        let (a, b, c) = (0, 1, 2);
        assert_eq!(
            ex,
            vec![
                TrainingExample { user: 0, prefix: vec![a], target: b },
                TrainingExample { user: 0, prefix: vec![a, b], target: c },
            ]
        );
        assert!(make_training_examples(&log, &["zz".into()], 20).is_err());
    }

    #[test]
    fn training_windows_cap_prefix() {
        let recs: Vec<_> = (0..22).map(|t| rec("u", &format!("i{t}"), t)).collect();
        let log = InteractionLog::from_interactions(recs);
        let ex = make_training_examples(&log, &["u".into()], 20).unwrap();
        assert_eq!(ex.len(), 21);
        assert_eq!(ex.iter().map(|e| e.prefix.len()).max(), Some(20));
        let last = ex.last().unwrap();
        assert_eq!(last.target, 21);
        assert_eq!(last.prefix.first(), Some(&1));
    }

    #[test]
    fn eval_prefix_rounding() {
        let mut recs = Vec::new();
        for t in 0..10 {
            recs.push(rec("ten", &format!("i{t}"), t));
        }
        for t in 0..5 {
            recs.push(rec("five", &format!("i{t}"), t));
        }
        recs.push(rec("one", "i0", 0));
        let log = InteractionLog::from_interactions(recs);
        let users = ["ten", "five", "one"].map(String::from);
        let set = make_eval_examples(&log, &users, 0.8).unwrap();
        assert_eq!(set.skipped, 1);
        assert_eq!(set.examples[0].prefix.len(), 8);
        assert_eq!(set.examples[0].targets.len(), 2);
        assert_eq!(set.examples[1].prefix.len(), 4);
        assert_eq!(set.examples[1].targets.len(), 1);
    }

    #[test]
    fn tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.tsv");
        let log = InteractionLog::from_interactions(vec![rec("u", "a", 4), rec("v", "b", 2)]);
        log.write_tsv(&path).unwrap();
        assert_eq!(load_interactions(&path).unwrap(), log);
    }
}
