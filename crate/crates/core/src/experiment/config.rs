//! Plain-text `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::baselines::{AlgorithmParams, DEFAULT_NEIGHBORS};
use crate::data::{TextFormat, DEFAULT_MIN_RATINGS, DEFAULT_TRAIN_FRACTION, DEFAULT_VALIDATION_FRACTION};
use crate::error::{Error, Result};
use crate::federation::{ClientSelection, MaskPolicy, TrainingSchedule, TripleCount};
use crate::model::Regularization;

/// Learning-rate grid of the hyperparameter search.
pub const DEFAULT_ALPHA_GRID: [f64; 5] = [0.005, 0.01, 0.05, 0.1, 0.5];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub dataset_name: Option<String>,
    pub format: TextFormat,
    pub min_ratings: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub algorithm: String,
    pub factors: usize,
    pub learning_rate: f64,
    pub lambda_user: Option<f64>,
    pub lambda_positive: Option<f64>,
    pub lambda_negative: Option<f64>,
    pub epochs: usize,
    pub clients_per_round: usize,
    pub triples: TripleCount,
    pub pi: f64,
    pub top_n: usize,
    pub seed: u64,
    pub neighbors: usize,
    pub mask: MaskPolicy,
    pub client_selection: ClientSelection,
    pub select_best: bool,
    pub rounds_per_epoch: Option<usize>,
    pub write_splits: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            dataset_name: None,
            format: TextFormat::default(),
            min_ratings: DEFAULT_MIN_RATINGS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            algorithm: "federank".to_owned(),
            factors: 20,
            learning_rate: 0.05,
            lambda_user: None,
            lambda_positive: None,
            lambda_negative: None,
            epochs: 20,
            clients_per_round: 1,
            triples: TripleCount::Fixed(1),
            pi: 1.0,
            top_n: 10,
            seed: 42,
            neighbors: DEFAULT_NEIGHBORS,
            mask: MaskPolicy::PerRound,
            client_selection: ClientSelection::Auto,
            select_best: true,
            rounds_per_epoch: None,
            write_splits: false,
            out: PathBuf::from("runs/latest"),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t")
}

fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("`{v}` is not a boolean"))),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let opt_f64 = |v: &str| -> Result<Option<f64>> {
            if v.is_empty() || v == "auto" {
                Ok(None)
            } else {
                parse_num(key, v).map(Some)
            }
        };
        match key.trim() {
            "dataset" => self.dataset = (!v.is_empty()).then(|| PathBuf::from(v)),
            "dataset_name" => self.dataset_name = (!v.is_empty()).then(|| v.to_owned()),
            "columns" => self.format.columns = TextFormat::parse_columns(v)?,
            "separator" => {
                let sep = unescape(v);
                if sep.is_empty() {
                    return Err(Error::config("separator", "must not be empty"));
                }
                self.format.separator = sep;
            }
            "has_header" => self.format.has_header = parse_bool(key, v)?,
            "min_ratings" => self.min_ratings = parse_num(key, v)?,
            "train_fraction" => self.train_fraction = parse_num(key, v)?,
            "validation_fraction" => self.validation_fraction = parse_num(key, v)?,
            "algorithm" => self.algorithm = v.to_owned(),
            "factors" => self.factors = parse_num(key, v)?,
            "learning_rate" | "alpha" => self.learning_rate = parse_num(key, v)?,
            "lambda_user" => self.lambda_user = opt_f64(v)?,
            "lambda_positive" => self.lambda_positive = opt_f64(v)?,
            "lambda_negative" => self.lambda_negative = opt_f64(v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "clients_per_round" => self.clients_per_round = parse_num(key, v)?,
            "triples" => self.triples = v.parse()?,
            "pi" => self.pi = parse_num(key, v)?,
            "top_n" => self.top_n = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "neighbors" => self.neighbors = parse_num(key, v)?,
            "mask" => self.mask = v.parse()?,
            "client_selection" => self.client_selection = v.parse()?,
            "select_best" => self.select_best = parse_bool(key, v)?,
            "rounds_per_epoch" => {
                self.rounds_per_epoch = if v.is_empty() || v == "auto" { None } else { Some(parse_num(key, v)?) }
            }
            "write_splits" => self.write_splits = parse_bool(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::config(other, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), format!("expected `key = value`, got `{line}`")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        let o = |v: Option<f64>| v.map_or_else(|| "auto".to_owned(), |x| x.to_string());
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dataset", self.dataset.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        kv("dataset_name", self.dataset_name.clone().unwrap_or_default());
        kv("columns", self.format.columns_string());
        kv("separator", escape(&self.format.separator));
        kv("has_header", self.format.has_header.to_string());
        kv("min_ratings", self.min_ratings.to_string());
        kv("train_fraction", self.train_fraction.to_string());
        kv("validation_fraction", self.validation_fraction.to_string());
        kv("algorithm", self.algorithm.clone());
        kv("factors", self.factors.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("lambda_user", o(self.lambda_user));
        kv("lambda_positive", o(self.lambda_positive));
        kv("lambda_negative", o(self.lambda_negative));
        kv("epochs", self.epochs.to_string());
        kv("clients_per_round", self.clients_per_round.to_string());
        kv("triples", self.triples.label());
        kv("pi", self.pi.to_string());
        kv("top_n", self.top_n.to_string());
        kv("seed", self.seed.to_string());
        kv("neighbors", self.neighbors.to_string());
        kv("mask", self.mask.name().to_owned());
        kv("client_selection", self.client_selection.name().to_owned());
        kv("select_best", self.select_best.to_string());
        kv("rounds_per_epoch", self.rounds_per_epoch.map_or_else(|| "auto".to_owned(), |r| r.to_string()));
        kv("write_splits", self.write_splits.to_string());
        kv("out", self.out.display().to_string());
        s
    }

    pub fn label(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| {
            self.dataset
                .as_ref()
                .and_then(|p| p.file_stem())
                .map_or_else(|| "dataset".to_owned(), |s| s.to_string_lossy().into_owned())
        })
    }

    /// Field-level checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_none() {
            return Err(Error::config("dataset", "no dataset path given"));
        }
        self.validate_params()
    }

    /// Same as [`validate`](Self::validate) minus the dataset path.
    pub fn validate_params(&self) -> Result<()> {
        if self.factors == 0 {
            return Err(Error::config("factors", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::config("pi", format!("{} is outside [0, 1]", self.pi)));
        }
        if self.top_n == 0 {
            return Err(Error::config("top_n", "must be positive"));
        }
        if self.clients_per_round == 0 {
            return Err(Error::config("clients_per_round", "must be positive"));
        }
        if self.neighbors == 0 {
            return Err(Error::config("neighbors", "must be positive"));
        }
        if self.min_ratings == 0 {
            return Err(Error::config("min_ratings", "must be at least 1"));
        }
        for (k, v) in [
            ("lambda_user", self.lambda_user),
            ("lambda_positive", self.lambda_positive),
            ("lambda_negative", self.lambda_negative),
        ] {
            if v.is_some_and(|x| !(x >= 0.0 && x.is_finite())) {
                return Err(Error::config(k, "must be a non-negative number"));
            }
        }
        Ok(())
    }

    /// Regularisation: explicit values win, the rest follow the learning rate.
    pub fn regularization(&self) -> Regularization {
        let d = Regularization::from_learning_rate(self.learning_rate);
        Regularization {
            user: self.lambda_user.unwrap_or(d.user),
            positive: self.lambda_positive.unwrap_or(d.positive),
            negative: self.lambda_negative.unwrap_or(d.negative),
        }
    }

    pub fn schedule(&self) -> TrainingSchedule {
        TrainingSchedule {
            factors: self.factors,
            epochs: self.epochs,
            clients_per_round: self.clients_per_round,
            triples: self.triples,
            pi: self.pi,
            learning_rate: self.learning_rate,
            reg: self.regularization(),
            seed: self.seed,
            mask: self.mask,
            selection: self.client_selection,
            top_n: self.top_n,
            select_best: self.select_best,
            rounds_per_epoch: self.rounds_per_epoch,
        }
    }

    pub fn params(&self) -> AlgorithmParams {
        AlgorithmParams {
            schedule: self.schedule(),
            neighbors: self.neighbors,
        }
    }
}

/// The `(π, T)` grid of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub pi_values: Vec<f64>,
    pub triple_regimes: Vec<TripleCount>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            pi_values: (0..=10).map(|k| k as f64 / 10.0).collect(),
            triple_regimes: vec![TripleCount::Fixed(1), TripleCount::PerUserAverage],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pi_values.is_empty() || self.triple_regimes.is_empty() {
            return Err(Error::config("sweep", "needs at least one pi and one T regime"));
        }
        if let Some(p) = self.pi_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::config("pi_values", format!("{p} is outside [0, 1]")));
        }
        Ok(())
    }
}

/// Parses `0,0.1,0.5` style lists.
pub fn parse_f64_list(field: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| parse_num(field, x.trim()))
        .collect()
}
