//! Split factorization model and the pair-wise scoring and gradient math.
//!
//! Item-side parameters (`q_i`, `b_i`) live in [`ServerModel`]; each user's
//! embedding `p_u` lives in that user's [`ClientState`]. A triple
//! `(u, i, j)` pairs a consumed item `i` with a non-consumed item `j`, and
//! its contribution is the gradient of `ln σ(x̂_ui − x̂_uj)` minus an L2 term.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, TAG_INIT};

/// Standard deviation of the zero-mean normal used for embedding init.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ServerModel {
    factors: usize,
    q: Vec<f64>,
    b: Vec<f64>,
}

impl ServerModel {
    pub fn zeros(n_items: usize, factors: usize) -> Self {
        Self {
            factors,
            q: vec![0.0; n_items * factors],
            b: vec![0.0; n_items],
        }
    }

    /// Normal(0, 0.1) item embeddings and zero biases, drawn from the
    /// initialisation stream of `seed`.
    pub fn init(n_items: usize, factors: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[TAG_INIT, 0]);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let q = (0..n_items * factors).map(|_| normal.sample(&mut rng)).collect();
        Self {
            factors,
            q,
            b: vec![0.0; n_items],
        }
    }

    pub fn from_parts(factors: usize, q: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if factors == 0 || q.len() != b.len() * factors {
            return Err(Error::DimensionMismatch {
                expected: b.len() * factors,
                got: q.len(),
            });
        }
        Ok(Self { factors, q, b })
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn n_items(&self) -> usize {
        self.b.len()
    }

    #[inline]
    pub fn item(&self, i: usize) -> &[f64] {
        &self.q[i * self.factors..(i + 1) * self.factors]
    }

    #[inline]
    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.q[i * self.factors..(i + 1) * self.factors]
    }

    #[inline]
    pub fn bias(&self, i: usize) -> f64 {
        self.b[i]
    }

    #[inline]
    pub fn bias_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.b[i]
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.q
    }

    pub fn biases(&self) -> &[f64] {
        &self.b
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.b).all(|v| v.is_finite())
    }

    fn check_item(&self, i: usize) -> Result<()> {
        if i >= self.n_items() {
            return Err(Error::CatalogBounds {
                item: i,
                catalog: self.n_items(),
            });
        }
        Ok(())
    }

    /// Writes `b_i + p · q_i` for every item into `out`.
    pub fn score_all(&self, p: &[f64], out: &mut [f64]) {
        debug_assert_eq!(p.len(), self.factors);
        for (i, slot) in out.iter_mut().enumerate().take(self.n_items()) {
            *slot = self.b[i] + dot(p, self.item(i));
        }
    }
}

/// One user's private side: the embedding and the consumed (train) items.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub user: usize,
    pub embedding: Vec<f64>,
    consumed: Vec<usize>,
}

impl ClientState {
    /// `consumed` is sorted and deduplicated on construction.
    pub fn new(user: usize, embedding: Vec<f64>, mut consumed: Vec<usize>) -> Self {
        consumed.sort_unstable();
        consumed.dedup();
        Self {
            user,
            embedding,
            consumed,
        }
    }

    /// Normal(0, 0.1) embedding from the initialisation stream of `seed`.
    pub fn init(user: usize, factors: usize, consumed: Vec<usize>, seed: u64) -> Self {
        Self::new(user, init_user_embedding(user, factors, seed), consumed)
    }

    pub fn consumed(&self) -> &[usize] {
        &self.consumed
    }

    pub fn has_consumed(&self, item: usize) -> bool {
        self.consumed.binary_search(&item).is_ok()
    }
}

pub fn init_user_embedding(user: usize, factors: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[TAG_INIT, 1 + user as u64]);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    (0..factors).map(|_| normal.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

impl Triple {
    pub fn new(client: &ClientState, pos: usize, neg: usize) -> Result<Self> {
        if pos == neg || !client.has_consumed(pos) || client.has_consumed(neg) {
            return Err(Error::Sampling {
                user: client.user,
                reason: format!("({pos}, {neg}) is not a consumed/non-consumed pair"),
            });
        }
        Ok(Self {
            user: client.user,
            pos,
            neg,
        })
    }
}

/// L2 coefficients for the user embedding and the positive/negative item
/// parameters. Item biases share the coefficient of their role.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub user: f64,
    pub positive: f64,
    pub negative: f64,
}

impl Regularization {
    pub const NONE: Self = Self {
        user: 0.0,
        positive: 0.0,
        negative: 0.0,
    };

    /// `α/20` for users and positive items, `α/200` for negative items.
    pub fn from_learning_rate(alpha: f64) -> Self {
        Self {
            user: alpha / 20.0,
            positive: alpha / 20.0,
            negative: alpha / 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemGradient {
    pub embedding: Vec<f64>,
    pub bias: f64,
}

/// Ascent directions from one client's triples. A single map holds both the
/// embedding rows and the biases, so their key sets always agree.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientContribution {
    pub items: BTreeMap<usize, ItemGradient>,
    pub user: Vec<f64>,
}

impl GradientContribution {
    pub fn empty(factors: usize) -> Self {
        Self {
            items: BTreeMap::new(),
            user: vec![0.0; factors],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn item_entry(&mut self, item: usize, factors: usize) -> &mut ItemGradient {
        self.items.entry(item).or_insert_with(|| ItemGradient {
            embedding: vec![0.0; factors],
            bias: 0.0,
        })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic function, branching on the sign so neither side overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn predict_score(model: &ServerModel, p_u: &[f64], item: usize) -> Result<f64> {
    model.check_item(item)?;
    if p_u.len() != model.factors {
        return Err(Error::DimensionMismatch {
            expected: model.factors,
            got: p_u.len(),
        });
    }
    Ok(model.bias(item) + dot(p_u, model.item(item)))
}

pub fn pairwise_diff(model: &ServerModel, p_u: &[f64], pos: usize, neg: usize) -> Result<f64> {
    Ok(predict_score(model, p_u, pos)? - predict_score(model, p_u, neg)?)
}

#[inline]
fn unchecked_diff(model: &ServerModel, p_u: &[f64], pos: usize, neg: usize) -> f64 {
    model.bias(pos) - model.bias(neg) + dot(p_u, model.item(pos)) - dot(p_u, model.item(neg))
}

/// Adds the gradient of one triple into `acc`.
fn add_triple(
    model: &ServerModel,
    p_u: &[f64],
    t: &Triple,
    reg: &Regularization,
    acc: &mut GradientContribution,
) {
    let f = model.factors;
    // 1 - σ(x) computed as σ(-x) keeps it strictly positive for large x.
    let s = sigmoid(-unchecked_diff(model, p_u, t.pos, t.neg));
    let q_i = model.item(t.pos);
    let q_j = model.item(t.neg);

    for k in 0..f {
        acc.user[k] += s * (q_i[k] - q_j[k]) - reg.user * p_u[k];
    }
    let gi = acc.item_entry(t.pos, f);
    for k in 0..f {
        gi.embedding[k] += s * p_u[k] - reg.positive * q_i[k];
    }
    gi.bias += s - reg.positive * model.bias(t.pos);
    let gj = acc.item_entry(t.neg, f);
    for k in 0..f {
        gj.embedding[k] += -s * p_u[k] - reg.negative * q_j[k];
    }
    gj.bias += -s - reg.negative * model.bias(t.neg);
}

pub fn triple_gradient(
    model: &ServerModel,
    client: &ClientState,
    t: &Triple,
    reg: &Regularization,
) -> GradientContribution {
    debug_assert!(client.has_consumed(t.pos) && !client.has_consumed(t.neg));
    let mut acc = GradientContribution::empty(model.factors);
    add_triple(model, &client.embedding, t, reg, &mut acc);
    acc
}

/// Sum of [`triple_gradient`] over `triples`, all evaluated at the current
/// (snapshot) parameters.
pub fn accumulate_round(
    model: &ServerModel,
    client: &ClientState,
    triples: &[Triple],
    reg: &Regularization,
) -> GradientContribution {
    let mut acc = GradientContribution::empty(model.factors);
    for t in triples {
        add_triple(model, &client.embedding, t, reg, &mut acc);
    }
    acc
}

/// The regularised pair-wise objective of one triple, the quantity whose
/// gradient [`triple_gradient`] returns.
pub fn triple_objective(
    model: &ServerModel,
    p_u: &[f64],
    t: &Triple,
    reg: &Regularization,
) -> f64 {
    let x = unchecked_diff(model, p_u, t.pos, t.neg);
    let sq = |v: &[f64]| dot(v, v);
    ln_sigmoid(x)
        - 0.5 * reg.user * sq(p_u)
        - 0.5 * reg.positive * (sq(model.item(t.pos)) + model.bias(t.pos).powi(2))
        - 0.5 * reg.negative * (sq(model.item(t.neg)) + model.bias(t.neg).powi(2))
}

fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Random normal values for tests and synthetic fixtures.
pub(crate) fn normal_vec<R: Rng>(rng: &mut R, n: usize, std: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| normal.sample(rng)).collect()
}
