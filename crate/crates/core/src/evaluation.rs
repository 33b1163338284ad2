//! Top-N list generation, accuracy and diversity metrics, and the
//! frequency curves behind the popularity analyses.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::{Interaction, InteractionDataset, Partition};
use crate::error::{Error, Result};
use crate::model::{ClientState, ServerModel};

/// Anything that can score every catalog item for a user.
pub trait Scorer: Sync {
    fn n_items(&self) -> usize;
    /// Fills `out` (length `n_items`) with the scores of `user`.
    fn score_user(&self, user: usize, out: &mut [f64]);
}

/// Scores of a split factorization model: server-side items plus each
/// client's embedding.
pub struct FactorScorer<'a> {
    pub model: &'a ServerModel,
    pub clients: &'a [ClientState],
}

impl Scorer for FactorScorer<'_> {
    fn n_items(&self) -> usize {
        self.model.n_items()
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        self.model.score_all(&self.clients[user].embedding, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exclusion {
    /// Validation-time lists: skip train items.
    Train,
    /// Test-time lists: skip train and validation items.
    TrainAndValidation,
}

impl Exclusion {
    pub fn for_target(target: Partition) -> Self {
        match target {
            Partition::Test => Exclusion::TrainAndValidation,
            _ => Exclusion::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopNLists {
    pub n: usize,
    pub lists: Vec<Vec<usize>>,
}

#[inline]
fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Best `n` items of `scores` among those not flagged in `excluded`,
/// descending by score with ties broken by ascending item id.
pub fn top_n_from_scores(scores: &[f64], excluded: &[bool], n: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&i| !excluded[i]).collect();
    if n == 0 {
        return Vec::new();
    }
    if cand.len() > n {
        cand.select_nth_unstable_by(n - 1, |&a, &b| rank_order(scores, a, b));
        cand.truncate(n);
    }
    cand.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    cand
}

pub fn top_n<S: Scorer + ?Sized>(scorer: &S, dataset: &InteractionDataset, n: usize, exclusion: Exclusion) -> TopNLists {
    let n_items = scorer.n_items();
    let lists = (0..dataset.n_users())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n_items], vec![false; n_items]),
            |(scores, excluded), u| {
                scorer.score_user(u, scores);
                let mut marked: Vec<usize> = dataset.train[u].iter().map(|r| r.item).collect();
                if exclusion == Exclusion::TrainAndValidation {
                    marked.extend(dataset.validation[u].iter().map(|r| r.item));
                }
                for &i in &marked {
                    excluded[i] = true;
                }
                let list = top_n_from_scores(scores, excluded, n);
                for &i in &marked {
                    excluded[i] = false;
                }
                list
            },
        )
        .collect();
    TopNLists { n, lists }
}

/// Mean precision and recall at `n` over users with a nonempty target set.
pub fn precision_recall(lists: &TopNLists, truth: &[Vec<Interaction>], n: usize) -> Result<(f64, f64)> {
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut users = 0usize;
    for (list, target) in lists.lists.iter().zip(truth) {
        if target.is_empty() {
            continue;
        }
        let hits = list
            .iter()
            .take(n)
            .filter(|&&i| target.binary_search_by_key(&i, |r| r.item).is_ok())
            .count();
        precision += hits as f64 / n as f64;
        recall += hits as f64 / target.len() as f64;
        users += 1;
    }
    if users == 0 || n == 0 {
        return Err(Error::Metric("no user with a nonempty target set".into()));
    }
    Ok((precision / users as f64, recall / users as f64))
}

/// How many lists each item appears in.
pub fn recommendation_counts(lists: &TopNLists, n_items: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_items];
    for l in &lists.lists {
        for &i in l {
            counts[i] += 1;
        }
    }
    counts
}

/// Number of distinct recommended items.
pub fn item_coverage(lists: &TopNLists) -> usize {
    let mut seen: Vec<usize> = lists.lists.iter().flatten().copied().collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// One minus the Gini inequality of the per-item counts, with zero-count
/// items included. 1 means perfectly even, 0 means everything on one item.
pub fn gini_from_counts(counts: &[u64]) -> f64 {
    let n = counts.len();
    let total: u64 = counts.iter().sum();
    if n < 2 || total == 0 {
        return 1.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let inequality: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, &c)| (2.0 * (k + 1) as f64 - n as f64 - 1.0) * (c as f64 / total as f64))
        .sum::<f64>()
        / (n as f64 - 1.0);
    (1.0 - inequality).clamp(0.0, 1.0)
}

pub fn gini_diversity(lists: &TopNLists, catalog_size: usize) -> f64 {
    gini_from_counts(&recommendation_counts(lists, catalog_size))
}

/// Counts sorted descending, truncated to `top_k` and divided by the total
/// over all items. Ranks start at 1.
pub fn frequency_curve(counts: &[u64], top_k: usize) -> Vec<(usize, f64)> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Vec::new();
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted
        .into_iter()
        .take(top_k)
        .enumerate()
        .map(|(k, c)| (k + 1, c as f64 / total as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub n: usize,
    pub precision_at_n: f64,
    pub recall_at_n: f64,
    pub item_coverage: usize,
    pub gini: f64,
    pub per_item_rec_counts: BTreeMap<usize, u64>,
}

impl MetricReport {
    pub fn from_lists(lists: &TopNLists, truth: &[Vec<Interaction>], n_items: usize) -> Result<Self> {
        let (p, r) = precision_recall(lists, truth, lists.n)?;
        let counts = recommendation_counts(lists, n_items);
        Ok(Self {
            n: lists.n,
            precision_at_n: p,
            recall_at_n: r,
            item_coverage: item_coverage(lists),
            gini: gini_from_counts(&counts),
            per_item_rec_counts: counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i, c))
                .collect(),
        })
    }

    pub fn rec_counts(&self, n_items: usize) -> Vec<u64> {
        let mut v = vec![0; n_items];
        for (&i, &c) in &self.per_item_rec_counts {
            v[i] = c;
        }
        v
    }
}

/// Lists for `target` with the matching exclusion, then the full report.
pub fn evaluate<S: Scorer + ?Sized>(scorer: &S, dataset: &InteractionDataset, n: usize, target: Partition) -> Result<MetricReport> {
    let lists = top_n(scorer, dataset, n, Exclusion::for_target(target));
    MetricReport::from_lists(&lists, dataset.partition(target), dataset.n_items())
}
