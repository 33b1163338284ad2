use super::Recommender;
use crate::data::InteractionDataset;
use crate::error::Result;
use crate::evaluation::Scorer;
use crate::federation::TelemetrySink;
use crate::rng::{unit_hash, TAG_RANDOM_SCORES};

/// I.i.d. uniform scores, a pure function of `(seed, user, item)`.
#[derive(Debug, Clone)]
pub struct RandomRecommender {
    seed: u64,
    n_items: usize,
}

impl RandomRecommender {
    pub fn new(seed: u64) -> Self {
        Self { seed, n_items: 0 }
    }
}

impl Scorer for RandomRecommender {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        for (i, s) in out.iter_mut().enumerate() {
            *s = unit_hash(self.seed, &[TAG_RANDOM_SCORES, user as u64, i as u64]);
        }
    }
}

impl Recommender for RandomRecommender {
    fn name(&self) -> &'static str {
        "random"
    }

    fn fit(&mut self, data: &InteractionDataset, _sink: &mut dyn TelemetrySink) -> Result<()> {
        self.n_items = data.n_items();
        Ok(())
    }
}

/// Train positive count per item, the same for every user.
#[derive(Debug, Clone, Default)]
pub struct MostPopular {
    counts: Vec<f64>,
}

impl Scorer for MostPopular {
    fn n_items(&self) -> usize {
        self.counts.len()
    }

    fn score_user(&self, _user: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.counts);
    }
}

impl Recommender for MostPopular {
    fn name(&self) -> &'static str {
        "most_popular"
    }

    fn fit(&mut self, data: &InteractionDataset, _sink: &mut dyn TelemetrySink) -> Result<()> {
        self.counts = data.item_popularity().into_iter().map(|c| c as f64).collect();
        Ok(())
    }
}
