use std::path::Path;

use super::bpr::write_factors;
use super::Recommender;
use crate::data::InteractionDataset;
use crate::error::Result;
use crate::evaluation::{FactorScorer, Scorer};
use crate::federation::{train, TelemetryLog, TelemetrySink, TrainOutput, TrainingSchedule};

/// The federated trainer exposed as a recommender.
pub struct FedeRank {
    schedule: TrainingSchedule,
    fitted: Option<TrainOutput>,
}

impl FedeRank {
    pub fn new(schedule: TrainingSchedule) -> Self {
        Self { schedule, fitted: None }
    }

    pub fn output(&self) -> Option<&TrainOutput> {
        self.fitted.as_ref()
    }
}

impl Scorer for FedeRank {
    fn n_items(&self) -> usize {
        self.fitted.as_ref().map_or(0, |o| o.model.n_items())
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        let o = self.fitted.as_ref().expect("fit before scoring");
        FactorScorer { model: &o.model, clients: &o.clients }.score_user(user, out);
    }
}

impl Recommender for FedeRank {
    fn name(&self) -> &'static str {
        "federank"
    }

    fn fit(&mut self, data: &InteractionDataset, sink: &mut dyn TelemetrySink) -> Result<()> {
        self.fitted = Some(train(data, &self.schedule, sink)?);
        Ok(())
    }

    fn telemetry(&self) -> Option<&TelemetryLog> {
        self.fitted.as_ref().map(|o| &o.log)
    }

    fn save(&self, data: &InteractionDataset, dir: &Path) -> Result<()> {
        match &self.fitted {
            Some(o) => write_factors(data, &o.model, &o.clients, dir),
            None => Ok(()),
        }
    }
}
