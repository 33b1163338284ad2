//! One client's share of a round and the server-side aggregation.

use std::collections::BTreeMap;

use rand::Rng;

use super::sampling::sample_local_triples;
use crate::error::{Error, Result};
use crate::model::{accumulate_round, ClientState, Regularization, ServerModel, Triple};
use crate::rng::{self, StreamRng, TAG_MASK, TAG_STICKY};

/// Decides, per sampled positive item, whether its row leaves the device.
pub trait PositiveMask {
    fn transmit(&mut self, user: usize, item: usize, pi: f64) -> bool;
}

/// Independent Bernoulli(π) draw per positive item per round.
pub struct RoundMask<R>(pub R);

impl<R: Rng> PositiveMask for RoundMask<R> {
    fn transmit(&mut self, _user: usize, _item: usize, pi: f64) -> bool {
        // random() is in [0, 1): π = 1 always sends, π = 0 never does
        self.0.random::<f64>() < pi
    }
}

/// A per-user consent set fixed for the whole run: the decision for
/// `(user, item)` is a pure function of the seed.
pub struct StickyMask {
    pub seed: u64,
}

impl PositiveMask for StickyMask {
    fn transmit(&mut self, user: usize, item: usize, pi: f64) -> bool {
        rng::unit_hash(self.seed, &[TAG_STICKY, user as u64, item as u64]) < pi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskPolicy {
    #[default]
    PerRound,
    Sticky,
}

impl MaskPolicy {
    pub fn name(self) -> &'static str {
        match self {
            MaskPolicy::PerRound => "per_round",
            MaskPolicy::Sticky => "sticky",
        }
    }

    pub(crate) fn for_client(self, seed: u64, round: u64, user: usize) -> Box<dyn PositiveMask> {
        match self {
            MaskPolicy::PerRound => Box::new(RoundMask(mask_rng(seed, round, user))),
            MaskPolicy::Sticky => Box::new(StickyMask { seed }),
        }
    }
}

impl std::str::FromStr for MaskPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_round" => Ok(MaskPolicy::PerRound),
            "sticky" => Ok(MaskPolicy::Sticky),
            other => Err(Error::config("mask", format!("unknown policy `{other}`"))),
        }
    }
}

pub(crate) fn mask_rng(seed: u64, round: u64, user: usize) -> StreamRng {
    rng::stream(seed, &[TAG_MASK, round, user as u64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRow {
    pub item: usize,
    pub embedding: Vec<f64>,
    pub bias: f64,
}

/// What the server receives from one client: the item rows that survived
/// the mask, sorted by item id. Masked rows are absent, not zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerUpdate {
    pub user: usize,
    pub rows: Vec<UpdateRow>,
}

impl ServerUpdate {
    pub fn row(&self, item: usize) -> Option<&UpdateRow> {
        self.rows
            .binary_search_by_key(&item, |r| r.item)
            .ok()
            .map(|k| &self.rows[k])
    }
}

/// Result of [`client_round`]. The update is what travels to the server;
/// the rest is simulator-side bookkeeping the server never sees.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRoundOutput {
    pub update: ServerUpdate,
    pub triples: Vec<Triple>,
    /// Distinct positive items of the sampled triples.
    pub sampled_positives: Vec<usize>,
    pub sampled_negatives: Vec<usize>,
    pub positive_rows_sent: usize,
    pub negative_rows_sent: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStep {
    pub learning_rate: f64,
    pub reg: Regularization,
    pub pi: f64,
}

/// Computes the contribution of `triples` at the snapshot, applies the
/// local user step, then masks the server-bound rows.
pub fn client_round_with_triples(
    snapshot: &ServerModel,
    client: &mut ClientState,
    triples: Vec<Triple>,
    step: &LocalStep,
    mask: &mut dyn PositiveMask,
) -> ClientRoundOutput {
    let contribution = accumulate_round(snapshot, client, &triples, &step.reg);
    for (p, d) in client.embedding.iter_mut().zip(&contribution.user) {
        *p += step.learning_rate * d;
    }

    let mut sampled_positives: Vec<usize> = triples.iter().map(|t| t.pos).collect();
    sampled_positives.sort_unstable();
    sampled_positives.dedup();
    let mut sampled_negatives: Vec<usize> = triples.iter().map(|t| t.neg).collect();
    sampled_negatives.sort_unstable();
    sampled_negatives.dedup();

    let mut rows = Vec::with_capacity(contribution.items.len());
    let mut positive_rows_sent = 0;
    let mut negative_rows_sent = 0;
    for (item, g) in contribution.items {
        let positive = sampled_positives.binary_search(&item).is_ok();
        if positive {
            if !mask.transmit(client.user, item, step.pi) {
                continue;
            }
            positive_rows_sent += 1;
        } else {
            negative_rows_sent += 1;
        }
        rows.push(UpdateRow {
            item,
            embedding: g.embedding,
            bias: g.bias,
        });
    }

    ClientRoundOutput {
        update: ServerUpdate { user: client.user, rows },
        triples,
        sampled_positives,
        sampled_negatives,
        positive_rows_sent,
        negative_rows_sent,
    }
}

/// Samples `t` triples with `rng`, then runs [`client_round_with_triples`].
pub fn client_round<R: Rng + ?Sized>(
    snapshot: &ServerModel,
    client: &mut ClientState,
    t: usize,
    step: &LocalStep,
    rng: &mut R,
    mask: &mut dyn PositiveMask,
) -> Result<ClientRoundOutput> {
    let triples = sample_local_triples(rng, client, snapshot.n_items(), t)?;
    Ok(client_round_with_triples(snapshot, client, triples, step, mask))
}

/// `Q ← Q + α·Σ dQ_u`, `b ← b + α·Σ db_u`. Updates are summed in ascending
/// user order; items that no update names are left untouched. The model is
/// not modified if any update is malformed.
pub fn aggregate(model: &mut ServerModel, updates: &[ServerUpdate], learning_rate: f64) -> Result<()> {
    let f = model.factors();
    let n_items = model.n_items();
    for u in updates {
        for w in u.rows.windows(2) {
            if w[0].item >= w[1].item {
                return Err(Error::Protocol(format!(
                    "update from user {} has unsorted or repeated item {}",
                    u.user, w[1].item
                )));
            }
        }
        for r in &u.rows {
            if r.item >= n_items {
                return Err(Error::Protocol(format!(
                    "update from user {} names item {} outside catalog of {n_items}",
                    u.user, r.item
                )));
            }
            if r.embedding.len() != f {
                return Err(Error::Protocol(format!(
                    "update from user {} has a row of length {} (expected {f})",
                    u.user,
                    r.embedding.len()
                )));
            }
        }
    }

    if let [only] = updates {
        for r in &only.rows {
            apply_row(model, r.item, &r.embedding, r.bias, learning_rate);
        }
        return Ok(());
    }

    let mut order: Vec<&ServerUpdate> = updates.iter().collect();
    order.sort_by_key(|u| u.user);
    let mut sums: BTreeMap<usize, (Vec<f64>, f64)> = BTreeMap::new();
    for u in order {
        for r in &u.rows {
            let (e, b) = sums.entry(r.item).or_insert_with(|| (vec![0.0; f], 0.0));
            for (acc, v) in e.iter_mut().zip(&r.embedding) {
                *acc += v;
            }
            *b += r.bias;
        }
    }
    for (item, (e, b)) in sums {
        apply_row(model, item, &e, b, learning_rate);
    }
    Ok(())
}

#[inline]
fn apply_row(model: &mut ServerModel, item: usize, delta: &[f64], bias: f64, lr: f64) {
    for (q, d) in model.item_mut(item).iter_mut().zip(delta) {
        *q += lr * d;
    }
    *model.bias_mut(item) += lr * bias;
}
