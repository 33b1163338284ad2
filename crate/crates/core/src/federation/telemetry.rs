use std::io::Write;
use std::path::Path;

use super::round::ServerUpdate;
use crate::error::{Error, Result};
use crate::model::Triple;

/// Everything the simulator knows about one client's round. Sinks see the
/// ground truth alongside the transmitted update.
#[derive(Debug, Clone, Copy)]
pub struct RoundRecord<'a> {
    pub round: u64,
    pub epoch: usize,
    pub user: usize,
    pub update: &'a ServerUpdate,
    pub triples: &'a [Triple],
    pub sampled_positives: &'a [usize],
    pub sampled_negatives: &'a [usize],
    pub positive_rows_sent: usize,
    pub negative_rows_sent: usize,
}

/// Observer of the round stream, called in aggregation order.
pub trait TelemetrySink {
    fn record(&mut self, record: &RoundRecord<'_>) -> Result<()>;

    fn epoch_end(&mut self, _epoch: usize, _validation: Option<(f64, f64)>) -> Result<()> {
        Ok(())
    }
}

pub struct NullSink;

impl TelemetrySink for NullSink {
    fn record(&mut self, _record: &RoundRecord<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundRow {
    pub round: u64,
    pub user: usize,
    pub positive_rows_sent: usize,
    pub negative_rows_sent: usize,
}

pub const ROUND_CSV_HEADER: &str = "round,user,n_positive_rows_sent,n_negative_rows_sent";

#[derive(Debug, Default, Clone, PartialEq)]
pub struct MemorySink {
    pub rows: Vec<RoundRow>,
}

impl TelemetrySink for MemorySink {
    fn record(&mut self, r: &RoundRecord<'_>) -> Result<()> {
        self.rows.push(RoundRow {
            round: r.round,
            user: r.user,
            positive_rows_sent: r.positive_rows_sent,
            negative_rows_sent: r.negative_rows_sent,
        });
        Ok(())
    }
}

/// Streams per-round transmission counts as CSV.
pub struct CsvSink<W: Write> {
    out: W,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{ROUND_CSV_HEADER}").map_err(|e| Error::io("<telemetry>", e))?;
        Ok(Self { out })
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io("<telemetry>", e))?;
        Ok(self.out)
    }
}

impl<W: Write> TelemetrySink for CsvSink<W> {
    fn record(&mut self, r: &RoundRecord<'_>) -> Result<()> {
        writeln!(self.out, "{},{},{},{}", r.round, r.user, r.positive_rows_sent, r.negative_rows_sent)
            .map_err(|e| Error::io("<telemetry>", e))
    }
}

/// Fans one record out to several sinks.
pub struct Tee<'a>(pub Vec<&'a mut dyn TelemetrySink>);

impl TelemetrySink for Tee<'_> {
    fn record(&mut self, r: &RoundRecord<'_>) -> Result<()> {
        self.0.iter_mut().try_for_each(|s| s.record(r))
    }

    fn epoch_end(&mut self, epoch: usize, validation: Option<(f64, f64)>) -> Result<()> {
        self.0.iter_mut().try_for_each(|s| s.epoch_end(epoch, validation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub validation_precision: f64,
    pub validation_recall: f64,
}

/// Aggregate counters kept by the trainer itself.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TelemetryLog {
    /// Transmitted rows per item over the whole run.
    pub item_update_counts: Vec<u64>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; 0 means the initial model.
    pub best_epoch: usize,
    pub rounds: u64,
    pub positive_rows_sent: u64,
    pub negative_rows_sent: u64,
}

impl TelemetryLog {
    pub fn new(n_items: usize) -> Self {
        Self {
            item_update_counts: vec![0; n_items],
            ..Self::default()
        }
    }

    pub fn write_item_counts(&self, path: &Path) -> Result<()> {
        let mut s = String::from("item,count\n");
        for (i, c) in self.item_update_counts.iter().enumerate() {
            s.push_str(&format!("{i},{c}\n"));
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}
