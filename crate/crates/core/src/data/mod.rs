//! Rating ingestion, implicit-feedback preparation and temporal splits.

mod load;
mod split;
pub mod synthetic;

use std::path::Path;

pub use load::{load_tsv, parse_ratings, Column, RawRating, TextFormat};
pub use split::{
    binarize_and_filter, compute_stats, temporal_split, DatasetStats, Interaction, InteractionDataset, Partition,
};

use crate::error::Result;

/// Minimum ratings a user needs to be kept.
pub const DEFAULT_MIN_RATINGS: usize = 20;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

/// Load, binarise, filter and split in one go with the given thresholds.
pub fn prepare(
    path: impl AsRef<Path>,
    format: &TextFormat,
    min_ratings: usize,
    train_fraction: f64,
    validation_fraction: f64,
) -> Result<InteractionDataset> {
    let ratings = load_tsv(path, format)?;
    let filtered = binarize_and_filter(ratings, min_ratings)?;
    temporal_split(&filtered, train_fraction, validation_fraction)
}

/// The three public corpora and where they are expected under a data root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    AmazonDigitalMusic,
    LibraryThing,
    MovieLens1M,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::AmazonDigitalMusic, Preset::LibraryThing, Preset::MovieLens1M];

    pub fn name(self) -> &'static str {
        match self {
            Preset::AmazonDigitalMusic => "amazon_dm",
            Preset::LibraryThing => "librarything",
            Preset::MovieLens1M => "ml1m",
        }
    }

    /// Relative path under the data root.
    pub fn file(self) -> &'static str {
        match self {
            Preset::AmazonDigitalMusic => "amazon_dm.tsv",
            Preset::LibraryThing => "librarything.tsv",
            Preset::MovieLens1M => "ml-1m/ratings.dat",
        }
    }

    pub fn format(self) -> TextFormat {
        match self {
            Preset::MovieLens1M => TextFormat::movielens(),
            _ => TextFormat::default(),
        }
    }

    /// Users, items and positives after the cold-user filter.
    pub fn expected_counts(self) -> (usize, usize, usize) {
        match self {
            Preset::AmazonDigitalMusic => (1835, 41488, 75932),
            Preset::LibraryThing => (7279, 37232, 749401),
            Preset::MovieLens1M => (6040, 3706, 1000209),
        }
    }
}
