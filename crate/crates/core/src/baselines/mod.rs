//! Recommenders behind one trait, looked up by name at runtime.
//!
//! The registry maps an algorithm name to a factory taking
//! [`AlgorithmParams`]. Every entry, including the federated trainer, is
//! evaluated through the same [`Scorer`] surface.

mod bpr;
mod federank;
mod knn;
mod simple;

use std::collections::BTreeMap;
use std::path::Path;

pub use bpr::{centralized_bpr_mf, BprMf, BprTrainer};
pub use federank::FedeRank;
pub use knn::{cosine, Knn, KnnMode, SimilarityMatrix};
pub use simple::{MostPopular, RandomRecommender};

use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::evaluation::Scorer;
use crate::federation::{TelemetryLog, TelemetrySink, TrainingSchedule};

pub const DEFAULT_NEIGHBORS: usize = 80;

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmParams {
    pub schedule: TrainingSchedule,
    pub neighbors: usize,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            schedule: TrainingSchedule::default(),
            neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

pub trait Recommender: Scorer + Send {
    fn name(&self) -> &'static str;

    /// Trains on the train split. Factorization models also use the
    /// validation split for epoch selection. Federated training reports
    /// each round to `sink`; other recommenders ignore it.
    fn fit(&mut self, data: &InteractionDataset, sink: &mut dyn TelemetrySink) -> Result<()>;

    fn score(&self, user: usize, item: usize) -> f64 {
        let mut out = vec![0.0; self.n_items()];
        self.score_user(user, &mut out);
        out[item]
    }

    fn telemetry(&self) -> Option<&TelemetryLog> {
        None
    }

    /// Writes model parameters (if any) under `dir`.
    fn save(&self, _data: &InteractionDataset, _dir: &Path) -> Result<()> {
        Ok(())
    }
}

pub type Factory = fn(&AlgorithmParams) -> Box<dyn Recommender>;

#[derive(Clone)]
pub struct Registry {
    factories: BTreeMap<&'static str, Factory>,
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// `random`, `most_popular`, `bpr_mf`, `user_knn`, `item_knn`, `federank`.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("random", |p| Box::new(RandomRecommender::new(p.schedule.seed)));
        r.register("most_popular", |_| Box::new(MostPopular::default()));
        r.register("bpr_mf", |p| Box::new(BprMf::new(p.schedule.clone())));
        r.register("user_knn", |p| Box::new(Knn::new(KnnMode::User, p.neighbors)));
        r.register("item_knn", |p| Box::new(Knn::new(KnnMode::Item, p.neighbors)));
        r.register("federank", |p| Box::new(FedeRank::new(p.schedule.clone())));
        r
    }

    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.factories.insert(name, factory);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, name: &str, params: &AlgorithmParams) -> Result<Box<dyn Recommender>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::config(
                "algorithm",
                format!("unknown `{name}`; expected one of {}", self.names().collect::<Vec<_>>().join(", ")),
            )
        })?;
        Ok(factory(params))
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_registered() {
        let r = Registry::with_defaults();
        let names: Vec<_> = r.names().collect();
        assert_eq!(names, vec!["bpr_mf", "federank", "item_knn", "most_popular", "random", "user_knn"]);
        for n in names {
            assert_eq!(r.build(n, &AlgorithmParams::default()).unwrap().name(), n);
        }
        assert!(matches!(r.build("vae", &AlgorithmParams::default()), Err(Error::Config { .. })));
    }
}
