//! Server-side reconstruction of a client's sampled positives from the
//! signs of its bias updates, and how masking limits it.
//!
//! For a single triple the positive and negative bias gradients are `s` and
//! `-s` with `s ∈ (0, 1)`, so without regularisation every transmitted row
//! reveals whether its item was consumed.

use std::io::Write;
use std::path::Path;

use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::federation::{train, RoundRecord, ServerUpdate, TelemetrySink, TrainingSchedule};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InferredSets {
    /// Items with a positive transmitted bias update.
    pub consumed: Vec<usize>,
    /// Items with a negative transmitted bias update.
    pub non_consumed: Vec<usize>,
}

pub fn sign_attack(update: &ServerUpdate) -> InferredSets {
    let mut out = InferredSets::default();
    for r in &update.rows {
        if r.bias > 0.0 {
            out.consumed.push(r.item);
        } else if r.bias < 0.0 {
            out.non_consumed.push(r.item);
        }
    }
    out
}

/// The attack on one update scored against the round's sampled positives.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub inferred: Vec<usize>,
    pub ground_truth: Vec<usize>,
    /// `None` when nothing was inferred.
    pub precision: Option<f64>,
    /// `None` when the ground truth is empty.
    pub recall: Option<f64>,
}

impl AttackResult {
    pub fn score(inferred: Vec<usize>, ground_truth: &[usize]) -> Self {
        let hits = inferred.iter().filter(|i| ground_truth.binary_search(i).is_ok()).count();
        let precision = (!inferred.is_empty()).then(|| hits as f64 / inferred.len() as f64);
        let recall = (!ground_truth.is_empty()).then(|| hits as f64 / ground_truth.len() as f64);
        Self {
            inferred,
            ground_truth: ground_truth.to_vec(),
            precision,
            recall,
        }
    }
}

/// Attacks every update it observes and averages per round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditSink {
    pub rounds: u64,
    precision_sum: f64,
    precision_rounds: u64,
    recall_sum: f64,
    recall_rounds: u64,
    rows: u64,
    flipped_rows: u64,
}

impl AuditSink {
    pub fn observe(&mut self, update: &ServerUpdate, sampled_positives: &[usize]) -> AttackResult {
        let inferred = sign_attack(update);
        for r in &update.rows {
            let truly_positive = sampled_positives.binary_search(&r.item).is_ok();
            let flipped = if truly_positive { r.bias <= 0.0 } else { r.bias >= 0.0 };
            self.rows += 1;
            self.flipped_rows += u64::from(flipped);
        }
        let res = AttackResult::score(inferred.consumed, sampled_positives);
        if let Some(p) = res.precision {
            self.precision_sum += p;
            self.precision_rounds += 1;
        }
        if let Some(r) = res.recall {
            self.recall_sum += r;
            self.recall_rounds += 1;
        }
        self.rounds += 1;
        res
    }

    /// Mean per-round precision over rounds with at least one inference.
    pub fn precision(&self) -> Option<f64> {
        (self.precision_rounds > 0).then(|| self.precision_sum / self.precision_rounds as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        (self.recall_rounds > 0).then(|| self.recall_sum / self.recall_rounds as f64)
    }

    /// Fraction of transmitted rows whose bias sign contradicts the item's role.
    pub fn sign_flip_rate(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.flipped_rows as f64 / self.rows as f64
        }
    }
}

impl TelemetrySink for AuditSink {
    fn record(&mut self, r: &RoundRecord<'_>) -> Result<()> {
        self.observe(r.update, r.sampled_positives);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub pi: f64,
    pub rounds: u64,
    pub attack_precision: Option<f64>,
    pub attack_recall: Option<f64>,
    pub sign_flip_rate: f64,
}

pub const AUDIT_CSV_HEADER: &str = "pi,rounds,attack_precision,attack_recall,sign_flip_rate";

/// Trains with `schedule` at each `π` in the grid and attacks every update.
pub fn audit_curve(dataset: &InteractionDataset, schedule: &TrainingSchedule, pi_grid: &[f64]) -> Result<Vec<AuditRow>> {
    if let Some(bad) = pi_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::config("pi_grid", format!("{bad} is outside [0, 1]")));
    }
    pi_grid
        .iter()
        .map(|&pi| {
            let mut sink = AuditSink::default();
            let s = TrainingSchedule {
                pi,
                select_best: false,
                ..schedule.clone()
            };
            train(dataset, &s, &mut sink)?;
            Ok(AuditRow {
                pi,
                rounds: sink.rounds,
                attack_precision: sink.precision(),
                attack_recall: sink.recall(),
                sign_flip_rate: sink.sign_flip_rate(),
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_owned(), |x| format!("{x:.6}"))
}

pub fn write_audit_csv(rows: &[AuditRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(f, "{AUDIT_CSV_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{:.6}",
            r.pi,
            r.rounds,
            opt(r.attack_precision),
            opt(r.attack_recall),
            r.sign_flip_rate
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}
