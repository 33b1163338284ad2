//! Implicit-feedback preparation: binarisation, cold-user filtering and the
//! per-user temporal hold-out.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;

use super::load::RawRating;
use crate::error::{Error, Result};
use crate::model::ClientState;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Interaction {
    pub item: usize,
    pub timestamp: i64,
}

/// Treats every rating as a positive interaction, keeps the earliest
/// timestamp of duplicated `(user, item)` pairs and drops users left with
/// fewer than `min_ratings_per_user` interactions.
///
/// Output order follows the first appearance of each pair in the input.
pub fn binarize_and_filter(ratings: Vec<RawRating>, min_ratings_per_user: usize) -> Result<Vec<RawRating>> {
    if min_ratings_per_user == 0 {
        return Err(Error::config("min_ratings", "must be at least 1"));
    }
    let mut seen: HashMap<(String, String), usize> = HashMap::with_capacity(ratings.len());
    let mut dedup: Vec<RawRating> = Vec::with_capacity(ratings.len());
    for r in ratings {
        match seen.get(&(r.user.clone(), r.item.clone())) {
            Some(&idx) => {
                let kept = &mut dedup[idx];
                kept.timestamp = kept.timestamp.min(r.timestamp);
            }
            None => {
                seen.insert((r.user.clone(), r.item.clone()), dedup.len());
                dedup.push(RawRating { rating: 1.0, ..r });
            }
        }
    }
    drop(seen);

    let mut per_user: HashMap<&str, usize> = HashMap::new();
    for r in &dedup {
        *per_user.entry(r.user.as_str()).or_default() += 1;
    }
    let keep: std::collections::HashSet<String> = per_user
        .into_iter()
        .filter(|&(_, n)| n >= min_ratings_per_user)
        .map(|(u, _)| u.to_owned())
        .collect();
    let out: Vec<RawRating> = dedup.into_iter().filter(|r| keep.contains(&r.user)).collect();
    if out.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no user has at least {min_ratings_per_user} ratings"
        )));
    }
    Ok(out)
}

/// Dense-indexed implicit feedback split into train, validation and test.
///
/// Each per-user list is sorted by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    users: Vec<String>,
    items: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    pub train: Vec<Vec<Interaction>>,
    pub validation: Vec<Vec<Interaction>>,
    pub test: Vec<Vec<Interaction>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

fn ceil_share(n: usize, fraction: f64) -> usize {
    // tolerance keeps 10 * 0.2 at 2, not 3
    let x = (n as f64 * fraction - 1e-9).ceil();
    (x.max(0.0) as usize).min(n)
}

/// Per user, the latest `⌈(1 − train_fraction)·n⌉` interactions go to test;
/// of the rest, the latest `⌈validation_fraction·remaining⌉` go to
/// validation. Timestamp ties are broken by ascending item id.
pub fn temporal_split(ratings: &[RawRating], train_fraction: f64, validation_fraction: f64) -> Result<InteractionDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction", "must lie in (0, 1)"));
    }
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::config("validation_fraction", "must lie in (0, 1)"));
    }

    let mut item_ids: HashMap<&str, usize> = HashMap::new();
    let mut items: Vec<&str> = Vec::new();
    let mut user_ids: HashMap<&str, usize> = HashMap::new();
    let mut users: Vec<&str> = Vec::new();
    let mut grouped: Vec<Vec<Interaction>> = Vec::new();
    for r in ratings {
        let item = *item_ids.entry(&r.item).or_insert_with(|| {
            items.push(&r.item);
            items.len() - 1
        });
        let user = *user_ids.entry(&r.user).or_insert_with(|| {
            users.push(&r.user);
            grouped.push(Vec::new());
            users.len() - 1
        });
        grouped[user].push(Interaction { item, timestamp: r.timestamp });
    }

    let mut kept_users = Vec::new();
    let mut parts = Vec::new();
    for (u, mut recs) in grouped.into_iter().enumerate() {
        recs.sort_by_key(|r| (r.timestamp, r.item));
        // collapse duplicates that were not removed upstream
        recs.dedup_by_key(|r| r.item);
        let n = recs.len();
        let n_test = ceil_share(n, 1.0 - train_fraction);
        let remaining = n - n_test;
        let n_val = ceil_share(remaining, validation_fraction);
        let n_train = remaining - n_val;
        if n_train == 0 {
            log::warn!("dropping user {} with {n} interactions: empty train split", users[u]);
            continue;
        }
        let test = recs.split_off(remaining);
        let validation = recs.split_off(n_train);
        kept_users.push(users[u]);
        parts.push((recs, validation, test));
    }
    if kept_users.is_empty() {
        return Err(Error::EmptyDataset("no user survives the temporal split".into()));
    }

    // compact item ids, preserving their relative order
    let mut used = vec![false; items.len()];
    for (tr, va, te) in &parts {
        for r in tr.iter().chain(va).chain(te) {
            used[r.item] = true;
        }
    }
    let mut remap = vec![usize::MAX; items.len()];
    let mut kept_items = Vec::new();
    for (old, &flag) in used.iter().enumerate() {
        if flag {
            remap[old] = kept_items.len();
            kept_items.push(items[old].to_owned());
        }
    }

    let fix = |mut v: Vec<Interaction>| {
        for r in &mut v {
            r.item = remap[r.item];
        }
        v.sort();
        v
    };
    let mut train = Vec::with_capacity(parts.len());
    let mut validation = Vec::with_capacity(parts.len());
    let mut test = Vec::with_capacity(parts.len());
    for (tr, va, te) in parts {
        train.push(fix(tr));
        validation.push(fix(va));
        test.push(fix(te));
    }

    Ok(InteractionDataset::assemble(
        kept_users.into_iter().map(str::to_owned).collect(),
        kept_items,
        train,
        validation,
        test,
    ))
}

impl InteractionDataset {
    fn assemble(
        users: Vec<String>,
        items: Vec<String>,
        train: Vec<Vec<Interaction>>,
        validation: Vec<Vec<Interaction>>,
        test: Vec<Vec<Interaction>>,
    ) -> Self {
        let user_lookup = users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        let item_lookup = items.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        Self {
            users,
            items,
            user_lookup,
            item_lookup,
            train,
            validation,
            test,
        }
    }

    /// Builds a dataset directly from dense per-user item lists. External ids
    /// are the decimal dense ids. Timestamps are the position in the list.
    pub fn from_dense(
        n_items: usize,
        train: Vec<Vec<usize>>,
        validation: Vec<Vec<usize>>,
        test: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n_users = train.len();
        if validation.len() != n_users || test.len() != n_users {
            return Err(Error::config("splits", "train/validation/test user counts differ"));
        }
        let to_lists = |lists: Vec<Vec<usize>>, offset: i64| -> Result<Vec<Vec<Interaction>>> {
            lists
                .into_iter()
                .map(|items| {
                    let mut v: Vec<Interaction> = items
                        .into_iter()
                        .enumerate()
                        .map(|(k, item)| Interaction { item, timestamp: offset + k as i64 })
                        .collect();
                    if let Some(bad) = v.iter().find(|r| r.item >= n_items) {
                        return Err(Error::CatalogBounds { item: bad.item, catalog: n_items });
                    }
                    v.sort();
                    v.dedup_by_key(|r| r.item);
                    Ok(v)
                })
                .collect()
        };
        let train = to_lists(train, 0)?;
        let validation = to_lists(validation, 1 << 20)?;
        let test = to_lists(test, 1 << 40)?;
        for u in 0..n_users {
            if train[u].is_empty() {
                return Err(Error::EmptyDataset(format!("user {u} has an empty train split")));
            }
            let overlaps = |a: &[Interaction], b: &[Interaction]| {
                a.iter().any(|x| b.binary_search_by_key(&x.item, |y| y.item).is_ok())
            };
            if overlaps(&train[u], &validation[u]) || overlaps(&train[u], &test[u]) || overlaps(&validation[u], &test[u]) {
                return Err(Error::config("splits", format!("user {u} has overlapping splits")));
            }
        }
        Ok(Self::assemble(
            (0..n_users).map(|u| u.to_string()).collect(),
            (0..n_items).map(|i| i.to_string()).collect(),
            train,
            validation,
            test,
        ))
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_name(&self, user: usize) -> &str {
        &self.users[user]
    }

    pub fn item_name(&self, item: usize) -> &str {
        &self.items[item]
    }

    pub fn user_index(&self, name: &str) -> Option<usize> {
        self.user_lookup.get(name).copied()
    }

    pub fn item_index(&self, name: &str) -> Option<usize> {
        self.item_lookup.get(name).copied()
    }

    pub fn partition(&self, part: Partition) -> &[Vec<Interaction>] {
        match part {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }

    /// Total number of train positives.
    pub fn x_plus(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn train_items(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.train[user].iter().map(|r| r.item)
    }

    /// Train positive count per item.
    pub fn item_popularity(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items()];
        for row in &self.train {
            for r in row {
                counts[r.item] += 1;
            }
        }
        counts
    }

    /// Freshly initialised client states, one per user.
    pub fn clients(&self, factors: usize, seed: u64) -> Vec<ClientState> {
        (0..self.n_users())
            .map(|u| ClientState::init(u, factors, self.train_items(u).collect(), seed))
            .collect()
    }

    /// Keeps a uniformly chosen `fraction` of users (at least one). The
    /// catalog is left unchanged.
    pub fn subsample_users(&self, fraction: f64, seed: u64) -> Self {
        let n = self.n_users();
        let keep = ((n as f64 * fraction).round() as usize).clamp(1, n);
        let mut rng = rng::stream(seed, &[0x5AB5]);
        let mut chosen = index::sample(&mut rng, n, keep).into_vec();
        chosen.sort_unstable();
        let pick = |lists: &[Vec<Interaction>]| chosen.iter().map(|&u| lists[u].clone()).collect();
        Self::assemble(
            chosen.iter().map(|&u| self.users[u].clone()).collect(),
            self.items.clone(),
            pick(&self.train),
            pick(&self.validation),
            pick(&self.test),
        )
    }

    /// Writes `train.tsv`, `validation.tsv`, `test.tsv` (user, item,
    /// timestamp with external ids) and `stats.csv` into `dir`.
    pub fn write_manifest(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, part) in [
            ("train.tsv", Partition::Train),
            ("validation.tsv", Partition::Validation),
            ("test.tsv", Partition::Test),
        ] {
            let path = dir.join(name);
            let mut out = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
            for (u, row) in self.partition(part).iter().enumerate() {
                for r in row {
                    writeln!(out, "{}\t{}\t{}", self.users[u], self.items[r.item], r.timestamp)
                        .map_err(|e| Error::io(&path, e))?;
                }
            }
            out.flush().map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("stats.csv");
        let stats = compute_stats(self);
        fs::write(&path, format!("{}\n{}\n", DatasetStats::CSV_HEADER, stats.csv_row()))
            .map_err(|e| Error::io(&path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_positive: usize,
    pub ratings_per_user: f64,
    pub ratings_per_item: f64,
    pub density_percent: f64,
}

impl DatasetStats {
    pub const CSV_HEADER: &'static str = "users,items,positives,per_user,per_item,density_percent";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.2},{:.2},{:.6}",
            self.n_users, self.n_items, self.n_positive, self.ratings_per_user, self.ratings_per_item, self.density_percent
        )
    }
}

/// Counts over all three partitions.
pub fn compute_stats(dataset: &InteractionDataset) -> DatasetStats {
    let n_users = dataset.n_users();
    let n_items = dataset.n_items();
    let n_positive: usize = [&dataset.train, &dataset.validation, &dataset.test]
        .iter()
        .flat_map(|p| p.iter())
        .map(Vec::len)
        .sum();
    DatasetStats {
        n_users,
        n_items,
        n_positive,
        ratings_per_user: n_positive as f64 / n_users as f64,
        ratings_per_item: n_positive as f64 / n_items as f64,
        density_percent: 100.0 * n_positive as f64 / (n_users as f64 * n_items as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rr(user: &str, item: &str, ts: i64) -> RawRating {
        RawRating { user: user.into(), item: item.into(), rating: 3.0, timestamp: ts }
    }

    fn user_with(n: usize, name: &str) -> Vec<RawRating> {
        (0..n).map(|k| rr(name, &format!("i{k}"), k as i64)).collect()
    }

    #[test]
    fn filter_removes_cold_users() {
        let mut data = user_with(19, "cold");
        data.extend(user_with(20, "warm"));
        let out = binarize_and_filter(data, 20).unwrap();
        assert_eq!(out.len(), 20);
        assert!(out.iter().all(|r| r.user == "warm" && r.rating == 1.0));
    }

    #[test]
    fn threshold_one_is_dedup_only() {
        let data = vec![rr("a", "x", 5), rr("b", "y", 1), rr("a", "x", 9)];
        let out = binarize_and_filter(data, 1).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].user.as_str(), out[0].timestamp), ("a", 5));
    }

    #[test]
    fn duplicate_keeps_earliest() {
        let out = binarize_and_filter(vec![rr("a", "x", 9), rr("a", "x", 5)], 1).unwrap();
        assert_eq!(out, vec![RawRating { rating: 1.0, ..rr("a", "x", 5) }]);
    }

    #[test]
    fn filter_everything_is_an_error() {
        assert!(matches!(binarize_and_filter(user_with(3, "a"), 20), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn split_ten_interactions() {
        let d = temporal_split(&user_with(10, "u"), 0.8, 0.2).unwrap();
        assert_eq!(d.test[0].len(), 2);
        assert_eq!(d.validation[0].len(), 2);
        assert_eq!(d.train[0].len(), 6);
        // latest two go to test
        let test_items: Vec<&str> = d.test[0].iter().map(|r| d.item_name(r.item)).collect();
        assert_eq!(test_items, vec!["i8", "i9"]);
    }

    #[test]
    fn split_ties_by_item_id() {
        let recs: Vec<RawRating> = (0..10).map(|k| rr("u", &format!("i{k}"), 42)).collect();
        let d = temporal_split(&recs, 0.8, 0.2).unwrap();
        assert_eq!(d.train[0].iter().map(|r| r.item).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(d.validation[0].iter().map(|r| r.item).collect::<Vec<_>>(), vec![6, 7]);
        assert_eq!(d.test[0].iter().map(|r| r.item).collect::<Vec<_>>(), vec![8, 9]);
        assert_eq!(d, temporal_split(&recs, 0.8, 0.2).unwrap());
    }

    #[test]
    fn split_drops_users_without_train() {
        let mut recs = user_with(1, "tiny");
        recs.extend(user_with(10, "big"));
        let d = temporal_split(&recs, 0.8, 0.2).unwrap();
        assert_eq!(d.n_users(), 1);
        assert_eq!(d.user_name(0), "big");
        // the single item of the dropped user shared `i0`, so the catalog stays at 10
        assert_eq!(d.n_items(), 10);
        assert!(temporal_split(&user_with(1, "tiny"), 0.8, 0.2).is_err());
    }

    #[test]
    fn split_rejects_bad_fractions() {
        assert!(temporal_split(&user_with(10, "u"), 1.0, 0.2).is_err());
        assert!(temporal_split(&user_with(10, "u"), 0.8, 0.0).is_err());
    }

    #[test]
    fn stats_single_rating() {
        // one interaction cannot be split, build the dataset directly
        let d = InteractionDataset::from_dense(1, vec![vec![0]], vec![vec![]], vec![vec![]]).unwrap();
        let s = compute_stats(&d);
        assert_eq!((s.n_users, s.n_items, s.n_positive), (1, 1, 1));
        assert_eq!(s.density_percent, 100.0);
    }

    #[test]
    fn from_dense_validates() {
        assert!(InteractionDataset::from_dense(3, vec![vec![]], vec![vec![]], vec![vec![]]).is_err());
        assert!(InteractionDataset::from_dense(3, vec![vec![3]], vec![vec![]], vec![vec![]]).is_err());
        assert!(InteractionDataset::from_dense(3, vec![vec![1]], vec![vec![1]], vec![vec![]]).is_err());
    }

    #[test]
    fn manifest_files() {
        let d = temporal_split(&user_with(10, "u"), 0.8, 0.2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.write_manifest(dir.path()).unwrap();
        let train = std::fs::read_to_string(dir.path().join("train.tsv")).unwrap();
        assert_eq!(train.lines().count(), 6);
        assert!(train.starts_with("u\ti0\t0"));
        let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
        assert!(stats.starts_with(DatasetStats::CSV_HEADER));
        assert!(stats.contains("1,10,10,"));
    }

    fn arb_ratings() -> impl Strategy<Value = Vec<RawRating>> {
        proptest::collection::vec((0u8..6, 0u8..15, 0i64..30), 1..200).prop_map(|v| {
            v.into_iter()
                .map(|(u, i, t)| rr(&format!("u{u}"), &format!("i{i}"), t))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn split_partitions_each_user(ratings in arb_ratings()) {
            let filtered = binarize_and_filter(ratings, 1).unwrap();
            let Ok(d) = temporal_split(&filtered, 0.8, 0.2) else { return Ok(()) };
            for u in 0..d.n_users() {
                let name = d.user_name(u);
                let mut expected: Vec<&str> = filtered.iter().filter(|r| r.user == name).map(|r| r.item.as_str()).collect();
                expected.sort();
                let mut got: Vec<&str> = d.train[u].iter().chain(&d.validation[u]).chain(&d.test[u]).map(|r| d.item_name(r.item)).collect();
                got.sort();
                prop_assert_eq!(&got, &expected);
                prop_assert!(!d.train[u].is_empty());
                let max_train = d.train[u].iter().chain(&d.validation[u]).map(|r| r.timestamp).max().unwrap();
                if let Some(min_test) = d.test[u].iter().map(|r| r.timestamp).min() {
                    prop_assert!(max_train <= min_test);
                }
                prop_assert_eq!(d.user_index(name), Some(u));
            }
            for i in 0..d.n_items() {
                prop_assert_eq!(d.item_index(d.item_name(i)), Some(i));
            }
            prop_assert_eq!(d.x_plus(), d.train.iter().map(Vec::len).sum::<usize>());
        }
    }
}
