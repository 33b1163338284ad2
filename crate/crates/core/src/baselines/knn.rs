use rayon::prelude::*;

use super::Recommender;
use crate::data::InteractionDataset;
use crate::error::Result;
use crate::evaluation::Scorer;
use crate::federation::TelemetrySink;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnMode {
    User,
    Item,
}

/// Cosine similarity of two binary profiles given as sorted id lists.
pub fn cosine(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (mut x, mut y, mut common) = (0, 0, 0usize);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                x += 1;
                y += 1;
            }
        }
    }
    cosine_from_counts(common, a.len(), b.len())
}

#[inline]
fn cosine_from_counts(common: usize, na: usize, nb: usize) -> f64 {
    if common == 0 {
        return 0.0;
    }
    // the product is commutative in f64, so cos(a, b) == cos(b, a) exactly
    common as f64 / ((na as f64) * (nb as f64)).sqrt()
}

/// Row-wise top-k cosine neighbours, diagonal excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub k: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SimilarityMatrix {
    /// `profiles[a]` lists the sorted "features" of entity `a`; `inverted[f]`
    /// lists the entities having feature `f`.
    pub fn build(profiles: &[Vec<usize>], inverted: &[Vec<usize>], k: usize) -> Self {
        let n = profiles.len();
        let rows = (0..n)
            .into_par_iter()
            .map_init(
                || (vec![0usize; n], Vec::<usize>::new()),
                |(counts, touched), a| {
                    for &f in &profiles[a] {
                        for &b in &inverted[f] {
                            if b != a {
                                if counts[b] == 0 {
                                    touched.push(b);
                                }
                                counts[b] += 1;
                            }
                        }
                    }
                    let mut row: Vec<(usize, f64)> = touched
                        .iter()
                        .map(|&b| (b, cosine_from_counts(counts[b], profiles[a].len(), profiles[b].len())))
                        .collect();
                    for &b in touched.iter() {
                        counts[b] = 0;
                    }
                    touched.clear();
                    let by_sim = |x: &(usize, f64), y: &(usize, f64)| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0));
                    if row.len() > k && k > 0 {
                        row.select_nth_unstable_by(k - 1, by_sim);
                        row.truncate(k);
                    }
                    row.truncate(k);
                    row.sort_by(by_sim);
                    row
                },
            )
            .collect();
        Self { k, rows }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.rows[a].iter().find(|&&(x, _)| x == b).map_or(0.0, |&(_, s)| s)
    }
}

/// Neighbourhood collaborative filtering over binary profiles.
///
/// User mode: `score(u, i) = Σ_{v ∈ N_k(u)} cos(u, v) · x_vi`.
/// Item mode: `score(u, i) = Σ_{j ∈ train(u)} cos(j, i) · [i ∈ N_k(j)]`.
#[derive(Debug, Clone)]
pub struct Knn {
    mode: KnnMode,
    k: usize,
    n_items: usize,
    user_items: Vec<Vec<usize>>,
    similarity: Option<SimilarityMatrix>,
}

impl Knn {
    pub fn new(mode: KnnMode, k: usize) -> Self {
        Self {
            mode,
            k: k.max(1),
            n_items: 0,
            user_items: Vec::new(),
            similarity: None,
        }
    }

    pub fn similarity(&self) -> Option<&SimilarityMatrix> {
        self.similarity.as_ref()
    }
}

impl Scorer for Knn {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        out.fill(0.0);
        let sim = self.similarity.as_ref().expect("fit before scoring");
        match self.mode {
            KnnMode::User => {
                for &(v, s) in &sim.rows[user] {
                    for &i in &self.user_items[v] {
                        out[i] += s;
                    }
                }
            }
            KnnMode::Item => {
                for &j in &self.user_items[user] {
                    for &(i, s) in &sim.rows[j] {
                        out[i] += s;
                    }
                }
            }
        }
    }
}

impl Recommender for Knn {
    fn name(&self) -> &'static str {
        match self.mode {
            KnnMode::User => "user_knn",
            KnnMode::Item => "item_knn",
        }
    }

    fn fit(&mut self, data: &InteractionDataset, _sink: &mut dyn TelemetrySink) -> Result<()> {
        self.n_items = data.n_items();
        self.user_items = (0..data.n_users()).map(|u| data.train_items(u).collect()).collect();
        let mut item_users = vec![Vec::new(); data.n_items()];
        for (u, items) in self.user_items.iter().enumerate() {
            for &i in items {
                item_users[i].push(u);
            }
        }
        self.similarity = Some(match self.mode {
            KnnMode::User => SimilarityMatrix::build(&self.user_items, &item_users, self.k),
            KnnMode::Item => SimilarityMatrix::build(&item_users, &self.user_items, self.k),
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::NullSink;
    use proptest::prelude::*;

    #[test]
    fn identical_and_orthogonal() {
        assert_eq!(cosine(&[1, 4, 7], &[1, 4, 7]), 1.0);
        assert_eq!(cosine(&[0, 2], &[1, 3]), 0.0);
        assert_eq!(cosine(&[], &[1]), 0.0);
    }

    // 3 users x 4 items:
    //   u0: {0, 1}   u1: {1, 2}   u2: {0, 1, 3}
    fn toy() -> InteractionDataset {
        InteractionDataset::from_dense(4, vec![vec![0, 1], vec![1, 2], vec![0, 1, 3]], vec![vec![]; 3], vec![vec![]; 3]).unwrap()
    }

    #[test]
    fn user_knn_matches_brute_force() {
        let d = toy();
        let mut knn = Knn::new(KnnMode::User, 80);
        knn.fit(&d, &mut NullSink).unwrap();
        let profiles: Vec<Vec<usize>> = (0..3).map(|u| d.train_items(u).collect()).collect();
        for u in 0..3 {
            for i in 0..4 {
                let oracle: f64 = (0..3)
                    .filter(|&v| v != u)
                    .map(|v| cosine(&profiles[u], &profiles[v]) * f64::from(u8::from(profiles[v].contains(&i))))
                    .sum();
                assert!((knn.score(u, i) - oracle).abs() < 1e-12, "u{u} i{i}");
            }
        }
        // by hand: cos(u0,u1) = 1/2, cos(u0,u2) = 2/sqrt(6)
        let expected = 0.5 + 2.0 / 6f64.sqrt();
        assert!((knn.score(0, 1) - expected).abs() < 1e-12);
    }

    #[test]
    fn item_knn_matches_brute_force() {
        let d = toy();
        let mut knn = Knn::new(KnnMode::Item, 80);
        knn.fit(&d, &mut NullSink).unwrap();
        let columns: Vec<Vec<usize>> = (0..4).map(|i| (0..3).filter(|&u| d.train_items(u).any(|x| x == i)).collect()).collect();
        for u in 0..3 {
            for i in 0..4 {
                let oracle: f64 = d.train_items(u).filter(|&j| j != i).map(|j| cosine(&columns[j], &columns[i])).sum();
                assert!((knn.score(u, i) - oracle).abs() < 1e-12, "u{u} i{i}");
            }
        }
    }

    #[test]
    fn neighbourhood_truncation() {
        let d = toy();
        let mut knn = Knn::new(KnnMode::User, 1);
        knn.fit(&d, &mut NullSink).unwrap();
        let sim = knn.similarity().unwrap();
        assert!(sim.rows.iter().all(|r| r.len() <= 1));
        assert_eq!(sim.rows[0][0].0, 2);
        assert!(sim.rows.iter().enumerate().all(|(a, r)| r.iter().all(|&(b, _)| a != b)));
    }

    proptest! {
        #[test]
        fn cosine_symmetric(a in proptest::collection::btree_set(0usize..40, 0..20), b in proptest::collection::btree_set(0usize..40, 0..20)) {
            let a: Vec<_> = a.into_iter().collect();
            let b: Vec<_> = b.into_iter().collect();
            prop_assert_eq!(cosine(&a, &b), cosine(&b, &a));
        }
    }
}
