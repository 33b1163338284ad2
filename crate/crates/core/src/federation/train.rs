use rayon::prelude::*;

use super::round::{aggregate, client_round_with_triples, ClientRoundOutput, LocalStep, MaskPolicy};
use super::sampling::{sample_local_triples, ClientSampler};
use super::telemetry::{EpochRecord, RoundRecord, TelemetryLog, TelemetrySink};
use crate::data::{InteractionDataset, Partition};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, FactorScorer};
use crate::model::{ClientState, Regularization, ServerModel, Triple};
use crate::rng::{self, StreamRng, TAG_SELECT, TAG_TRIPLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClientSelection {
    Uniform,
    ProfileWeighted,
    /// Profile-weighted when one client samples one triple per round,
    /// uniform otherwise.
    #[default]
    Auto,
}

impl ClientSelection {
    pub fn name(self) -> &'static str {
        match self {
            ClientSelection::Uniform => "uniform",
            ClientSelection::ProfileWeighted => "profile",
            ClientSelection::Auto => "auto",
        }
    }
}

impl std::str::FromStr for ClientSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ClientSelection::Uniform),
            "profile" => Ok(ClientSelection::ProfileWeighted),
            "auto" => Ok(ClientSelection::Auto),
            other => Err(Error::config("client_selection", format!("unknown mode `{other}`"))),
        }
    }
}

/// Triples each selected client samples per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleCount {
    Fixed(usize),
    /// `X⁺ / |U|` of the train split, rounded, at least 1.
    PerUserAverage,
}

impl TripleCount {
    pub fn resolve(self, dataset: &InteractionDataset) -> usize {
        match self {
            TripleCount::Fixed(t) => t,
            TripleCount::PerUserAverage => {
                ((dataset.x_plus() as f64 / dataset.n_users() as f64).round() as usize).max(1)
            }
        }
    }

    pub fn label(self) -> String {
        match self {
            TripleCount::Fixed(t) => t.to_string(),
            TripleCount::PerUserAverage => "per_user_avg".to_owned(),
        }
    }
}

impl std::str::FromStr for TripleCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_user_avg" => Ok(TripleCount::PerUserAverage),
            n => n
                .parse()
                .ok()
                .filter(|&t| t >= 1)
                .map(TripleCount::Fixed)
                .ok_or_else(|| Error::config("triples", format!("`{n}` is neither a positive integer nor per_user_avg"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSchedule {
    pub factors: usize,
    pub epochs: usize,
    pub clients_per_round: usize,
    pub triples: TripleCount,
    pub pi: f64,
    pub learning_rate: f64,
    pub reg: Regularization,
    pub seed: u64,
    pub mask: MaskPolicy,
    pub selection: ClientSelection,
    /// List length for per-epoch validation.
    pub top_n: usize,
    /// Return the parameters of the best validation epoch instead of the last.
    pub select_best: bool,
    /// Overrides `⌈X⁺/(m·T)⌉`.
    pub rounds_per_epoch: Option<usize>,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        let learning_rate = 0.05;
        Self {
            factors: 20,
            epochs: 20,
            clients_per_round: 1,
            triples: TripleCount::Fixed(1),
            pi: 1.0,
            learning_rate,
            reg: Regularization::from_learning_rate(learning_rate),
            seed: 42,
            mask: MaskPolicy::PerRound,
            selection: ClientSelection::Auto,
            top_n: 10,
            select_best: true,
            rounds_per_epoch: None,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self, n_users: usize) -> Result<()> {
        if self.factors == 0 {
            return Err(Error::config("factors", "must be positive"));
        }
        if !(self.pi >= 0.0 && self.pi <= 1.0) {
            return Err(Error::config("pi", format!("{} is outside [0, 1]", self.pi)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.clients_per_round == 0 || self.clients_per_round > n_users {
            return Err(Error::config(
                "clients_per_round",
                format!("{} clients requested from a federation of {n_users}", self.clients_per_round),
            ));
        }
        if matches!(self.triples, TripleCount::Fixed(0)) {
            return Err(Error::config("triples", "must be at least 1"));
        }
        Ok(())
    }

    pub fn rounds_per_epoch(&self, dataset: &InteractionDataset) -> usize {
        self.rounds_per_epoch.unwrap_or_else(|| {
            let per_round = self.clients_per_round * self.triples.resolve(dataset);
            dataset.x_plus().div_ceil(per_round).max(1)
        })
    }

    fn resolved_selection(&self, t: usize) -> ClientSelection {
        match self.selection {
            ClientSelection::Auto if self.clients_per_round == 1 && t == 1 => ClientSelection::ProfileWeighted,
            ClientSelection::Auto => ClientSelection::Uniform,
            s => s,
        }
    }
}

pub(crate) fn triple_rng(seed: u64, round: u64, user: usize) -> StreamRng {
    rng::stream(seed, &[TAG_TRIPLES, round, user as u64])
}

pub(crate) fn selection_rng(seed: u64) -> StreamRng {
    rng::stream(seed, &[TAG_SELECT])
}

/// Validation precision/recall at `n`, or `None` when no user has
/// validation interactions.
pub(crate) fn validation_score(
    dataset: &InteractionDataset,
    model: &ServerModel,
    clients: &[ClientState],
    n: usize,
) -> Option<(f64, f64)> {
    evaluate(&FactorScorer { model, clients }, dataset, n, Partition::Validation)
        .ok()
        .map(|r| (r.precision_at_n, r.recall_at_n))
}

/// Tracks the best-validation parameters across epochs.
#[derive(Debug, Clone)]
pub(crate) struct BestSnapshot {
    pub epoch: usize,
    pub precision: f64,
    pub model: ServerModel,
    pub users: Vec<Vec<f64>>,
}

impl BestSnapshot {
    pub(crate) fn initial(model: &ServerModel, clients: &[ClientState]) -> Self {
        Self {
            epoch: 0,
            precision: f64::NEG_INFINITY,
            model: model.clone(),
            users: clients.iter().map(|c| c.embedding.clone()).collect(),
        }
    }

    pub(crate) fn offer(&mut self, epoch: usize, precision: f64, model: &ServerModel, clients: &[ClientState]) {
        if precision > self.precision {
            self.epoch = epoch;
            self.precision = precision;
            self.model.clone_from(model);
            for (dst, c) in self.users.iter_mut().zip(clients) {
                dst.clone_from(&c.embedding);
            }
        }
    }

    pub(crate) fn restore(self, clients: &mut [ClientState]) -> ServerModel {
        for (c, e) in clients.iter_mut().zip(self.users) {
            c.embedding = e;
        }
        self.model
    }
}

/// Server, clients and round counter of one simulated federation.
pub struct Federation<'d> {
    dataset: &'d InteractionDataset,
    schedule: TrainingSchedule,
    triples_per_client: usize,
    model: ServerModel,
    clients: Vec<ClientState>,
    sampler: ClientSampler,
    selection_rng: StreamRng,
    round: u64,
    epoch: usize,
    log: TelemetryLog,
}

/// The plan of one round: who participates and how much they compute.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundPlan {
    pub round: u64,
    pub selected_clients: Vec<usize>,
    pub triples_per_client: usize,
    pub pi: f64,
}

pub struct TrainOutput {
    pub model: ServerModel,
    pub clients: Vec<ClientState>,
    pub log: TelemetryLog,
}

impl<'d> Federation<'d> {
    pub fn new(dataset: &'d InteractionDataset, schedule: TrainingSchedule) -> Result<Self> {
        if dataset.n_users() == 0 || dataset.x_plus() == 0 {
            return Err(Error::EmptyDataset("no train interactions".into()));
        }
        schedule.validate(dataset.n_users())?;
        let t = schedule.triples.resolve(dataset);
        let sampler = match schedule.resolved_selection(t) {
            ClientSelection::ProfileWeighted => {
                ClientSampler::profile_weighted((0..dataset.n_users()).map(|u| dataset.train[u].len()).collect())
            }
            _ => ClientSampler::uniform(dataset.n_users()),
        };
        Ok(Self {
            dataset,
            model: ServerModel::init(dataset.n_items(), schedule.factors, schedule.seed),
            clients: dataset.clients(schedule.factors, schedule.seed),
            selection_rng: selection_rng(schedule.seed),
            triples_per_client: t,
            sampler,
            round: 0,
            epoch: 0,
            log: TelemetryLog::new(dataset.n_items()),
            schedule,
        })
    }

    pub fn model(&self) -> &ServerModel {
        &self.model
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn log(&self) -> &TelemetryLog {
        &self.log
    }

    pub fn schedule(&self) -> &TrainingSchedule {
        &self.schedule
    }

    pub fn triples_per_client(&self) -> usize {
        self.triples_per_client
    }

    /// Distribution step: picks the round's clients.
    pub fn plan_round(&mut self) -> Result<RoundPlan> {
        let selected_clients = self.sampler.select(&mut self.selection_rng, self.schedule.clients_per_round)?;
        Ok(RoundPlan {
            round: self.round,
            selected_clients,
            triples_per_client: self.triples_per_client,
            pi: self.schedule.pi,
        })
    }

    /// Each planned client samples its own triples from its private stream.
    pub fn execute_round(&mut self, plan: &RoundPlan, sink: &mut dyn TelemetrySink) -> Result<()> {
        let n_items = self.dataset.n_items();
        let seed = self.schedule.seed;
        let round = plan.round;
        let batches = plan
            .selected_clients
            .iter()
            .map(|&u| {
                let mut rng = triple_rng(seed, round, u);
                sample_local_triples(&mut rng, &self.clients[u], n_items, plan.triples_per_client).map(|ts| (u, ts))
            })
            .collect::<Result<Vec<_>>>()?;
        self.execute_with_triples(batches, sink)
    }

    /// Runs a round on caller-supplied triples. Every client computes
    /// against the same snapshot; then the server aggregates.
    pub fn execute_with_triples(&mut self, batches: Vec<(usize, Vec<Triple>)>, sink: &mut dyn TelemetrySink) -> Result<()> {
        let step = LocalStep {
            learning_rate: self.schedule.learning_rate,
            reg: self.schedule.reg,
            pi: self.schedule.pi,
        };
        let seed = self.schedule.seed;
        let round = self.round;
        let policy = self.schedule.mask;
        let snapshot = &self.model;

        let mut seen: Vec<usize> = batches.iter().map(|(u, _)| *u).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) || seen.last().is_some_and(|&u| u >= self.clients.len()) {
            return Err(Error::Protocol(format!("round {round}: invalid client set {seen:?}")));
        }
        for (u, ts) in &batches {
            let c = &self.clients[*u];
            if let Some(t) = ts.iter().find(|t| t.user != *u || !c.has_consumed(t.pos) || c.has_consumed(t.neg) || t.neg >= snapshot.n_items()) {
                return Err(Error::Sampling { user: *u, reason: format!("invalid triple {t:?}") });
            }
        }

        let run = |client: &mut ClientState, triples: Vec<Triple>| -> ClientRoundOutput {
            let mut mask = policy.for_client(seed, round, client.user);
            client_round_with_triples(snapshot, client, triples, &step, mask.as_mut())
        };

        let outputs: Vec<ClientRoundOutput> = if batches.len() == 1 {
            let (u, ts) = batches.into_iter().next().unwrap();
            vec![run(&mut self.clients[u], ts)]
        } else {
            let mut taken: Vec<(ClientState, Vec<Triple>)> = batches
                .into_iter()
                .map(|(u, ts)| (std::mem::replace(&mut self.clients[u], ClientState::new(u, Vec::new(), Vec::new())), ts))
                .collect();
            let outs: Vec<ClientRoundOutput> = taken
                .par_iter_mut()
                .map(|(c, ts)| run(c, std::mem::take(ts)))
                .collect();
            for (c, _) in taken {
                let u = c.user;
                self.clients[u] = c;
            }
            outs
        };

        let updates: Vec<_> = outputs.iter().map(|o| o.update.clone()).collect();
        aggregate(&mut self.model, &updates, self.schedule.learning_rate)?;

        let mut order: Vec<&ClientRoundOutput> = outputs.iter().collect();
        order.sort_by_key(|o| o.update.user);
        for o in order {
            for r in &o.update.rows {
                self.log.item_update_counts[r.item] += 1;
            }
            self.log.positive_rows_sent += o.positive_rows_sent as u64;
            self.log.negative_rows_sent += o.negative_rows_sent as u64;
            sink.record(&RoundRecord {
                round,
                epoch: self.epoch,
                user: o.update.user,
                update: &o.update,
                triples: &o.triples,
                sampled_positives: &o.sampled_positives,
                sampled_negatives: &o.sampled_negatives,
                positive_rows_sent: o.positive_rows_sent,
                negative_rows_sent: o.negative_rows_sent,
            })?;
        }
        self.log.rounds += 1;
        self.round += 1;
        Ok(())
    }

    pub fn run_round(&mut self, sink: &mut dyn TelemetrySink) -> Result<()> {
        let plan = self.plan_round()?;
        self.execute_round(&plan, sink)
    }

    /// All rounds of one epoch; returns the epoch's validation scores.
    pub fn run_epoch(&mut self, sink: &mut dyn TelemetrySink) -> Result<Option<(f64, f64)>> {
        let rpe = self.schedule.rounds_per_epoch(self.dataset);
        for _ in 0..rpe {
            self.run_round(sink)?;
        }
        self.epoch += 1;
        if !self.model.is_finite() {
            return Err(Error::Protocol(format!("non-finite parameters after epoch {}", self.epoch)));
        }
        let scores = validation_score(self.dataset, &self.model, &self.clients, self.schedule.top_n);
        if let Some((p, r)) = scores {
            self.log.epochs.push(EpochRecord {
                epoch: self.epoch,
                validation_precision: p,
                validation_recall: r,
            });
        }
        sink.epoch_end(self.epoch, scores)?;
        Ok(scores)
    }

    pub fn into_output(self) -> TrainOutput {
        TrainOutput {
            model: self.model,
            clients: self.clients,
            log: self.log,
        }
    }
}

/// Runs `E · rpe` rounds and returns the parameters of the best validation
/// epoch (or the last epoch when selection is off or impossible).
pub fn train(dataset: &InteractionDataset, schedule: &TrainingSchedule, sink: &mut dyn TelemetrySink) -> Result<TrainOutput> {
    let mut fed = Federation::new(dataset, schedule.clone())?;
    let mut best = BestSnapshot::initial(&fed.model, &fed.clients);
    let mut any_validation = false;
    for epoch in 1..=schedule.epochs {
        if let Some((p, _)) = fed.run_epoch(sink)? {
            any_validation = true;
            if schedule.select_best {
                best.offer(epoch, p, &fed.model, &fed.clients);
            }
        }
        log::debug!("federated epoch {epoch}/{} done", schedule.epochs);
    }
    let mut out = fed.into_output();
    if schedule.select_best && any_validation && schedule.epochs > 0 {
        out.log.best_epoch = best.epoch;
        out.model = best.restore(&mut out.clients);
    } else {
        out.log.best_epoch = schedule.epochs;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate, SyntheticSpec};
    use crate::data::{binarize_and_filter, temporal_split};
    use crate::federation::telemetry::{MemorySink, NullSink};

    fn dataset() -> InteractionDataset {
        let raw = generate(&SyntheticSpec { n_users: 30, n_items: 60, ..SyntheticSpec::default() });
        temporal_split(&binarize_and_filter(raw, 5).unwrap(), 0.8, 0.2).unwrap()
    }

    fn schedule() -> TrainingSchedule {
        TrainingSchedule { factors: 4, epochs: 2, rounds_per_epoch: Some(50), ..TrainingSchedule::default() }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let d = dataset();
        let s = TrainingSchedule { epochs: 0, ..schedule() };
        let out = train(&d, &s, &mut NullSink).unwrap();
        assert_eq!(out.model, ServerModel::init(d.n_items(), 4, s.seed));
        assert_eq!(out.clients, d.clients(4, s.seed));
        assert_eq!(out.log.rounds, 0);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let d = dataset();
        let s = TrainingSchedule { clients_per_round: 3, triples: TripleCount::Fixed(4), pi: 0.5, ..schedule() };
        let mut a = MemorySink::default();
        let mut b = MemorySink::default();
        let oa = train(&d, &s, &mut a).unwrap();
        let ob = train(&d, &s, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa.log, ob.log);
        assert_eq!(oa.model, ob.model);
        assert_eq!(a.rows.len(), 2 * 50 * 3);
    }

    #[test]
    fn rounds_per_epoch_covers_x_plus() {
        let d = dataset();
        let s = TrainingSchedule { clients_per_round: 2, triples: TripleCount::Fixed(3), rounds_per_epoch: None, ..schedule() };
        assert_eq!(s.rounds_per_epoch(&d), d.x_plus().div_ceil(6));
        let avg = TripleCount::PerUserAverage.resolve(&d);
        assert_eq!(avg, (d.x_plus() as f64 / d.n_users() as f64).round() as usize);
    }

    #[test]
    fn schedule_validation() {
        let d = dataset();
        assert!(Federation::new(&d, TrainingSchedule { pi: 1.5, ..schedule() }).is_err());
        assert!(Federation::new(&d, TrainingSchedule { clients_per_round: 31, ..schedule() }).is_err());
        assert!(Federation::new(&d, TrainingSchedule { learning_rate: 0.0, ..schedule() }).is_err());
        assert!("0".parse::<TripleCount>().is_err());
        assert_eq!("per_user_avg".parse::<TripleCount>().unwrap(), TripleCount::PerUserAverage);
    }

    #[test]
    fn rejects_foreign_triples() {
        let d = dataset();
        let mut fed = Federation::new(&d, schedule()).unwrap();
        let c = &fed.clients()[0];
        let pos = c.consumed()[0];
        let bad = Triple { user: 0, pos, neg: pos };
        assert!(fed.execute_with_triples(vec![(0, vec![bad])], &mut NullSink).is_err());
    }

    #[test]
    fn best_epoch_recorded() {
        let d = dataset();
        let out = train(&d, &TrainingSchedule { epochs: 3, ..schedule() }, &mut NullSink).unwrap();
        assert_eq!(out.log.epochs.len(), 3);
        let best = out.log.epochs.iter().map(|e| e.validation_precision).fold(f64::NEG_INFINITY, f64::max);
        let first = out.log.epochs.iter().find(|e| e.validation_precision == best).unwrap();
        assert_eq!(out.log.best_epoch, first.epoch);
    }
}
