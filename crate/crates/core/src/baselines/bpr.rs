use std::fmt::Write as _;
use std::path::Path;

use super::Recommender;
use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::evaluation::{FactorScorer, Scorer};
use crate::federation::{
    sample_local_triples, selection_rng, triple_rng, validation_score, BestSnapshot, ClientSampler, TelemetrySink,
    TrainingSchedule,
};
use crate::model::{triple_gradient, ClientState, ServerModel, Triple};
use crate::rng::StreamRng;

/// Centralized BPR-MF by stochastic gradient ascent on single triples.
///
/// A step draws a positive interaction uniformly from all train positives
/// (a user proportional to profile size, then one of its items) and a
/// negative uniformly from that user's non-consumed items. The random
/// streams are the ones the federated trainer uses with one client and one
/// triple per round, so both walk the same triple sequence for a seed.
pub struct BprTrainer<'d> {
    dataset: &'d InteractionDataset,
    schedule: TrainingSchedule,
    model: ServerModel,
    clients: Vec<ClientState>,
    sampler: ClientSampler,
    selection_rng: StreamRng,
    step: u64,
}

impl<'d> BprTrainer<'d> {
    pub fn new(dataset: &'d InteractionDataset, schedule: TrainingSchedule) -> Result<Self> {
        if dataset.x_plus() == 0 {
            return Err(Error::EmptyDataset("no train interactions".into()));
        }
        schedule.validate(dataset.n_users())?;
        Ok(Self {
            dataset,
            model: ServerModel::init(dataset.n_items(), schedule.factors, schedule.seed),
            clients: dataset.clients(schedule.factors, schedule.seed),
            sampler: ClientSampler::profile_weighted(dataset.train.iter().map(Vec::len).collect()),
            selection_rng: selection_rng(schedule.seed),
            step: 0,
            schedule,
        })
    }

    pub fn model(&self) -> &ServerModel {
        &self.model
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn sample_triple(&mut self) -> Result<Triple> {
        let u = self.sampler.select(&mut self.selection_rng, 1)?[0];
        let mut rng = triple_rng(self.schedule.seed, self.step, u);
        Ok(sample_local_triples(&mut rng, &self.clients[u], self.dataset.n_items(), 1)?[0])
    }

    /// One ascent step on `t`, all gradients taken before any update.
    pub fn apply(&mut self, t: &Triple) {
        let alpha = self.schedule.learning_rate;
        let client = &mut self.clients[t.user];
        let g = triple_gradient(&self.model, client, t, &self.schedule.reg);
        for (p, d) in client.embedding.iter_mut().zip(&g.user) {
            *p += alpha * d;
        }
        for (item, row) in &g.items {
            for (q, d) in self.model.item_mut(*item).iter_mut().zip(&row.embedding) {
                *q += alpha * d;
            }
            *self.model.bias_mut(*item) += alpha * row.bias;
        }
        self.step += 1;
    }

    pub fn step(&mut self) -> Result<Triple> {
        let t = self.sample_triple()?;
        self.apply(&t);
        Ok(t)
    }

    /// `X⁺` steps.
    pub fn run_epoch(&mut self) -> Result<()> {
        for _ in 0..self.dataset.x_plus() {
            self.step()?;
        }
        if !self.model.is_finite() {
            return Err(Error::Protocol("non-finite BPR-MF parameters".into()));
        }
        Ok(())
    }

    /// Trains for the scheduled epochs and keeps the best validation epoch.
    pub fn train(mut self) -> Result<(ServerModel, Vec<ClientState>, usize)> {
        let mut best = BestSnapshot::initial(&self.model, &self.clients);
        let mut any = false;
        for epoch in 1..=self.schedule.epochs {
            self.run_epoch()?;
            if let Some((p, _)) = validation_score(self.dataset, &self.model, &self.clients, self.schedule.top_n) {
                any = true;
                if self.schedule.select_best {
                    best.offer(epoch, p, &self.model, &self.clients);
                }
            }
            log::debug!("bpr-mf epoch {epoch}/{} done", self.schedule.epochs);
        }
        if self.schedule.select_best && any && self.schedule.epochs > 0 {
            let epoch = best.epoch;
            let model = best.restore(&mut self.clients);
            Ok((model, self.clients, epoch))
        } else {
            Ok((self.model, self.clients, self.schedule.epochs))
        }
    }
}

/// Item model plus the user embedding matrix (one row per user).
pub fn centralized_bpr_mf(dataset: &InteractionDataset, schedule: &TrainingSchedule) -> Result<(ServerModel, Vec<Vec<f64>>)> {
    let (model, clients, _) = BprTrainer::new(dataset, schedule.clone())?.train()?;
    Ok((model, clients.into_iter().map(|c| c.embedding).collect()))
}

#[derive(Debug, Clone)]
pub struct BprMf {
    schedule: TrainingSchedule,
    fitted: Option<(ServerModel, Vec<ClientState>)>,
    pub best_epoch: usize,
}

impl BprMf {
    pub fn new(schedule: TrainingSchedule) -> Self {
        Self {
            schedule,
            fitted: None,
            best_epoch: 0,
        }
    }

    pub fn model(&self) -> Option<(&ServerModel, &[ClientState])> {
        self.fitted.as_ref().map(|(m, c)| (m, c.as_slice()))
    }
}

impl Scorer for BprMf {
    fn n_items(&self) -> usize {
        self.fitted.as_ref().map_or(0, |(m, _)| m.n_items())
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        let (model, clients) = self.fitted.as_ref().expect("fit before scoring");
        FactorScorer { model, clients }.score_user(user, out);
    }
}

impl Recommender for BprMf {
    fn name(&self) -> &'static str {
        "bpr_mf"
    }

    fn fit(&mut self, data: &InteractionDataset, _sink: &mut dyn TelemetrySink) -> Result<()> {
        let (model, clients, epoch) = BprTrainer::new(data, self.schedule.clone())?.train()?;
        self.best_epoch = epoch;
        self.fitted = Some((model, clients));
        Ok(())
    }

    fn save(&self, data: &InteractionDataset, dir: &Path) -> Result<()> {
        match &self.fitted {
            Some((m, c)) => write_factors(data, m, c, dir),
            None => Ok(()),
        }
    }
}

/// `items.csv` (item, bias, f0..) and `users.csv` (user, f0..) with
/// external ids.
pub(crate) fn write_factors(data: &InteractionDataset, model: &ServerModel, clients: &[ClientState], dir: &Path) -> Result<()> {
    let f = model.factors();
    let header: String = (0..f).map(|k| format!(",f{k}")).collect();
    let mut items = format!("item,bias{header}\n");
    for i in 0..model.n_items() {
        let _ = write!(items, "{},{}", data.item_name(i), model.bias(i));
        for v in model.item(i) {
            let _ = write!(items, ",{v}");
        }
        items.push('\n');
    }
    let mut users = format!("user{header}\n");
    for c in clients {
        users.push_str(data.user_name(c.user));
        for v in &c.embedding {
            let _ = write!(users, ",{v}");
        }
        users.push('\n');
    }
    for (name, body) in [("items.csv", items), ("users.csv", users)] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::NullSink;
    use crate::model::Regularization;

    #[test]
    fn learns_separable_pair() {
        let d = InteractionDataset::from_dense(2, vec![vec![0]], vec![vec![]], vec![vec![]]).unwrap();
        let s = TrainingSchedule {
            factors: 4,
            epochs: 200,
            learning_rate: 0.1,
            reg: Regularization::from_learning_rate(0.1),
            ..TrainingSchedule::default()
        };
        let mut bpr = BprMf::new(s);
        bpr.fit(&d, &mut NullSink).unwrap();
        assert!(bpr.score(0, 0) > bpr.score(0, 1));
    }

    #[test]
    fn seeded_and_bit_identical() {
        let d = InteractionDataset::from_dense(
            8,
            vec![vec![0, 1, 2], vec![2, 3], vec![4, 5, 6, 1]],
            vec![vec![7], vec![5], vec![0]],
            vec![vec![]; 3],
        )
        .unwrap();
        let s = TrainingSchedule { factors: 3, epochs: 5, ..TrainingSchedule::default() };
        let a = centralized_bpr_mf(&d, &s).unwrap();
        let b = centralized_bpr_mf(&d, &s).unwrap();
        assert_eq!(a, b);
        assert!(a.0.is_finite());
    }
}
