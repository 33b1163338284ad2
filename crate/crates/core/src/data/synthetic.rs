//! Seeded synthetic implicit-feedback data with a latent-factor structure
//! and a power-law item popularity.

use rand::Rng;

use super::load::RawRating;
use super::split::{binarize_and_filter, temporal_split, InteractionDataset};
use super::{DEFAULT_TRAIN_FRACTION, DEFAULT_VALIDATION_FRACTION};
use crate::error::Result;
use crate::model::normal_vec;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub latent: usize,
    /// Every user consumes at least this many items.
    pub min_profile: usize,
    /// Mean of the geometric number of items added on top of `min_profile`.
    pub mean_extra: f64,
    /// Item `k` (in a shuffled order) has base weight `(k+1)^-exponent`.
    pub popularity_exponent: f64,
    /// Scale of the user/item affinity term relative to popularity.
    pub affinity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 50,
            n_items: 120,
            latent: 4,
            min_profile: 20,
            mean_extra: 10.0,
            popularity_exponent: 0.8,
            affinity: 2.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// Generated ratings split with the default fractions.
    pub fn split(&self) -> Result<InteractionDataset> {
        let ratings = binarize_and_filter(generate(self), 1)?;
        temporal_split(&ratings, DEFAULT_TRAIN_FRACTION, DEFAULT_VALIDATION_FRACTION)
    }
}

pub fn generate(spec: &SyntheticSpec) -> Vec<RawRating> {
    let mut rng = rng::stream(spec.seed, &[0x5E11]);
    let n_items = spec.n_items;
    let mut order: Vec<usize> = (0..n_items).collect();
    for k in (1..n_items).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    let mut log_pop = vec![0.0; n_items];
    for (rank, &item) in order.iter().enumerate() {
        log_pop[item] = -spec.popularity_exponent * ((rank + 1) as f64).ln();
    }
    let item_vecs: Vec<Vec<f64>> = (0..n_items).map(|_| normal_vec(&mut rng, spec.latent, 1.0)).collect();
    let scale = 1.0 / (spec.latent.max(1) as f64).sqrt();

    let mut out = Vec::new();
    for u in 0..spec.n_users {
        let user_vec = normal_vec(&mut rng, spec.latent, 1.0);
        let p_stop = 1.0 / (1.0 + spec.mean_extra.max(0.0));
        let mut n = spec.min_profile;
        while n < n_items.saturating_sub(1) && rng.random::<f64>() >= p_stop {
            n += 1;
        }
        let n = n.min(n_items.saturating_sub(1)).max(1);

        // Gumbel top-n: sampling without replacement proportional to exp(score)
        let mut keyed: Vec<(f64, usize)> = (0..n_items)
            .map(|i| {
                let aff: f64 = user_vec.iter().zip(&item_vecs[i]).map(|(a, b)| a * b).sum::<f64>() * scale;
                let g = -(-(rng.random::<f64>().max(f64::MIN_POSITIVE)).ln()).ln();
                (log_pop[i] + spec.affinity * aff + g, i)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut picked: Vec<usize> = keyed[..n].iter().map(|&(_, i)| i).collect();
        for k in (1..picked.len()).rev() {
            picked.swap(k, rng.random_range(0..=k));
        }
        let base = 1_000_000 * u as i64;
        for (t, item) in picked.into_iter().enumerate() {
            out.push(RawRating {
                user: format!("u{u}"),
                item: format!("i{item}"),
                rating: 1.0,
                timestamp: base + t as i64,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let spec = SyntheticSpec::default();
        let a = generate(&spec);
        assert_eq!(a, generate(&spec));
        let users: std::collections::HashSet<_> = a.iter().map(|r| &r.user).collect();
        assert_eq!(users.len(), 50);
        for u in users {
            let n = a.iter().filter(|r| &r.user == u).count();
            assert!(n >= 20);
        }
    }
}
