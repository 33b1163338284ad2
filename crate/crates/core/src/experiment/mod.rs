//! Run directories, `π` sweeps, learning-rate search and the audit driver.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub use config::{parse_f64_list, ExperimentConfig, SweepSpec, DEFAULT_ALPHA_GRID};

use crate::baselines::Registry;
use crate::data::{prepare, InteractionDataset, Partition};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, frequency_curve, MetricReport};
use crate::federation::{train, CsvSink, NullSink, TripleCount};
use crate::privacy::{audit_curve, write_audit_csv, AuditRow};

/// Top ranks kept in the update-frequency curve.
pub const UPDATE_CURVE_LEN: usize = 1000;
/// Top ranks kept in the recommendation-frequency curve.
pub const REC_CURVE_LEN: usize = 250;

pub fn metrics_header(n: usize) -> String {
    format!("algorithm,dataset,pi,T,P@{n},R@{n},IC@{n},G@{n}")
}

pub const CURVE_HEADER: &str = "pi,rank,value";

fn metrics_row(algorithm: &str, dataset: &str, pi: Option<f64>, t: Option<&str>, m: &MetricReport) -> String {
    format!(
        "{algorithm},{dataset},{},{},{:.6},{:.6},{},{:.6}",
        pi.map(|p| p.to_string()).unwrap_or_default(),
        t.unwrap_or_default(),
        m.precision_at_n,
        m.recall_at_n,
        m.item_coverage,
        m.gini
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loads and splits the dataset named in `config`.
pub fn load_dataset(config: &ExperimentConfig) -> Result<InteractionDataset> {
    config.validate()?;
    let path = config.dataset.as_ref().expect("validated");
    prepare(path, &config.format, config.min_ratings, config.train_fraction, config.validation_fraction)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub algorithm: String,
    pub metrics: MetricReport,
    pub best_epoch: Option<usize>,
}

/// Loads the configured dataset and runs one algorithm end to end.
pub fn run_single(config: &ExperimentConfig, registry: &Registry) -> Result<RunSummary> {
    let data = load_dataset(config)?;
    run_on(config, &data, registry)
}

/// Trains `config.algorithm` on `data`, evaluates on the test split and
/// fills `config.out` with the run artefacts.
pub fn run_on(config: &ExperimentConfig, data: &InteractionDataset, registry: &Registry) -> Result<RunSummary> {
    config.validate_params()?;
    let dir = config.out.clone();
    mkdir(&dir)?;
    let cfg_path = dir.join("config.txt");
    fs::write(&cfg_path, config.render()).map_err(|e| Error::io(&cfg_path, e))?;
    if config.write_splits {
        data.write_manifest(&dir.join("split"))?;
    }

    let mut model = registry.build(&config.algorithm, &config.params())?;
    let federated = config.algorithm == "federank";
    let rounds_path = dir.join("telemetry_rounds.csv");
    if federated {
        let mut sink = CsvSink::new(create(&rounds_path)?)?;
        model.fit(data, &mut sink)?;
        sink.into_inner()?.flush().map_err(|e| Error::io(&rounds_path, e))?;
    } else {
        model.fit(data, &mut NullSink)?;
    }
    model.save(data, &dir)?;

    let mut best_epoch = None;
    if let Some(log) = model.telemetry() {
        log.write_item_counts(&dir.join("item_updates.csv"))?;
        write_epochs(&dir.join("epochs.csv"), log)?;
        best_epoch = Some(log.best_epoch);
    }

    let metrics = evaluate(model.as_ref(), data, config.top_n, Partition::Test)?;
    let label = config.label();
    let t_label = config.triples.label();
    let (pi, t) = if federated {
        (Some(config.pi), Some(t_label.as_str()))
    } else {
        (None, None)
    };
    let path = dir.join("metrics.csv");
    let mut f = create(&path)?;
    writeln!(f, "{}", metrics_header(config.top_n)).map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{}", metrics_row(&config.algorithm, &label, pi, t, &metrics)).map_err(|e| Error::io(&path, e))?;
    f.flush().map_err(|e| Error::io(&path, e))?;
    log::info!(
        "{} on {label}: P@{n}={:.4} R@{n}={:.4}",
        config.algorithm,
        metrics.precision_at_n,
        metrics.recall_at_n,
        n = config.top_n
    );
    Ok(RunSummary {
        dir,
        algorithm: config.algorithm.clone(),
        metrics,
        best_epoch,
    })
}

fn write_epochs(path: &Path, log: &crate::federation::TelemetryLog) -> Result<()> {
    let mut s = String::from("epoch,validation_precision,validation_recall\n");
    for e in &log.epochs {
        s.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.validation_precision, e.validation_recall));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub pi: f64,
    pub triples: TripleCount,
    pub metrics: MetricReport,
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Cells that failed, with the error text.
    pub failures: Vec<(f64, TripleCount, String)>,
}

fn write_curve(w: &mut impl Write, pi: f64, curve: &[(usize, f64)]) -> std::io::Result<()> {
    for (rank, v) in curve {
        writeln!(w, "{pi},{rank},{v:.8}")?;
    }
    w.flush()
}

/// Federated training over every `(T, π)` cell. Rows are flushed as they
/// complete; a failing cell is reported and the sweep moves on.
pub fn run_sweep(config: &ExperimentConfig, data: &InteractionDataset, spec: &SweepSpec) -> Result<SweepOutcome> {
    config.validate_params()?;
    spec.validate()?;
    let dir = &config.out;
    mkdir(dir)?;
    let cfg_path = dir.join("config.txt");
    fs::write(&cfg_path, config.render()).map_err(|e| Error::io(&cfg_path, e))?;

    let label = config.label();
    let table = dir.join("pi_sweep.csv");
    let mut rows_out = create(&table)?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(&p, e)
    };
    writeln!(rows_out, "{}", metrics_header(config.top_n)).map_err(io(&table))?;

    let mut outcome = SweepOutcome::default();
    for &t in &spec.triple_regimes {
        let fig_dir = if spec.triple_regimes.len() > 1 {
            dir.join(format!("t_{}", t.label()))
        } else {
            dir.clone()
        };
        mkdir(&fig_dir)?;
        let upd_path = fig_dir.join("updates_freq.csv");
        let rec_path = fig_dir.join("rec_freq.csv");
        let mut upd = create(&upd_path)?;
        let mut rec = create(&rec_path)?;
        writeln!(upd, "{CURVE_HEADER}").map_err(io(&upd_path))?;
        writeln!(rec, "{CURVE_HEADER}").map_err(io(&rec_path))?;

        for &pi in &spec.pi_values {
            let mut cell = config.schedule();
            cell.pi = pi;
            cell.triples = t;
            let result = train(data, &cell, &mut NullSink).and_then(|out| {
                let scorer = crate::evaluation::FactorScorer {
                    model: &out.model,
                    clients: &out.clients,
                };
                let m = evaluate(&scorer, data, config.top_n, Partition::Test)?;
                Ok((out.log, m))
            });
            match result {
                Ok((log, m)) => {
                    writeln!(rows_out, "{}", metrics_row("federank", &label, Some(pi), Some(&t.label()), &m))
                        .and_then(|_| rows_out.flush())
                        .map_err(io(&table))?;
                    write_curve(&mut upd, pi, &frequency_curve(&log.item_update_counts, UPDATE_CURVE_LEN))
                        .map_err(io(&upd_path))?;
                    write_curve(&mut rec, pi, &frequency_curve(&m.rec_counts(data.n_items()), REC_CURVE_LEN))
                        .map_err(io(&rec_path))?;
                    log::info!("sweep T={} pi={pi}: P@{}={:.4}", t.label(), config.top_n, m.precision_at_n);
                    outcome.rows.push(SweepRow { pi, triples: t, metrics: m });
                }
                Err(e) => {
                    log::error!("sweep cell T={} pi={pi} failed: {e}", t.label());
                    outcome.failures.push((pi, t, e.to_string()));
                }
            }
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRow {
    pub learning_rate: f64,
    pub validation_precision: f64,
    pub validation_recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub rows: Vec<SearchRow>,
    pub best_learning_rate: f64,
}

/// Picks the learning rate with the best validation precision; ties go
/// to the smaller rate. Writes `search.csv` under `config.out`.
pub fn hyperparameter_search(
    config: &ExperimentConfig,
    data: &InteractionDataset,
    registry: &Registry,
    grid: &[f64],
) -> Result<SearchOutcome> {
    config.validate_params()?;
    if grid.is_empty() {
        return Err(Error::config("alpha_grid", "empty"));
    }
    if let Some(bad) = grid.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::config("alpha_grid", format!("{bad} is not a positive rate")));
    }
    let mut alphas = grid.to_vec();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();

    let mut rows = Vec::with_capacity(alphas.len());
    for &a in &alphas {
        let mut c = config.clone();
        c.learning_rate = a;
        let mut model = registry.build(&c.algorithm, &c.params())?;
        model.fit(data, &mut NullSink)?;
        let m = evaluate(model.as_ref(), data, c.top_n, Partition::Validation)?;
        log::info!("search {} alpha={a}: validation P@{}={:.4}", c.algorithm, c.top_n, m.precision_at_n);
        rows.push(SearchRow {
            learning_rate: a,
            validation_precision: m.precision_at_n,
            validation_recall: m.recall_at_n,
        });
    }
    let mut best = &rows[0];
    for r in &rows[1..] {
        if r.validation_precision > best.validation_precision {
            best = r;
        }
    }
    let best_learning_rate = best.learning_rate;

    mkdir(&config.out)?;
    let path = config.out.join("search.csv");
    let mut s = format!("algorithm,learning_rate,validation_P@{n},validation_R@{n}\n", n = config.top_n);
    for r in &rows {
        s.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            config.algorithm, r.learning_rate, r.validation_precision, r.validation_recall
        ));
    }
    fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    Ok(SearchOutcome { rows, best_learning_rate })
}

/// Attack curve over `pi_grid`, written to `audit.csv` under `config.out`.
pub fn run_audit(config: &ExperimentConfig, data: &InteractionDataset, pi_grid: &[f64]) -> Result<Vec<AuditRow>> {
    config.validate_params()?;
    mkdir(&config.out)?;
    let rows = audit_curve(data, &config.schedule(), pi_grid)?;
    write_audit_csv(&rows, &config.out.join("audit.csv"))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::SyntheticSpec;

    fn small() -> (InteractionDataset, ExperimentConfig, tempfile::TempDir) {
        let data = SyntheticSpec {
            n_users: 20,
            n_items: 40,
            min_profile: 10,
            mean_extra: 2.0,
            ..SyntheticSpec::default()
        }
        .split()
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            epochs: 2,
            factors: 4,
            out: tmp.path().join("run"),
            ..ExperimentConfig::default()
        };
        (data, cfg, tmp)
    }

    #[test]
    fn run_directory_layout() {
        let (data, cfg, _tmp) = small();
        let s = run_on(&cfg, &data, &Registry::with_defaults()).unwrap();
        for f in ["config.txt", "metrics.csv", "items.csv", "users.csv", "telemetry_rounds.csv", "item_updates.csv", "epochs.csv"] {
            assert!(s.dir.join(f).exists(), "{f}");
        }
        let m = fs::read_to_string(s.dir.join("metrics.csv")).unwrap();
        assert!(m.starts_with("algorithm,dataset,pi,T,P@10,R@10,IC@10,G@10\nfederank,"));
        let back = ExperimentConfig::load(&s.dir.join("config.txt")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn baseline_metrics_leave_pi_blank() {
        let (data, mut cfg, _tmp) = small();
        cfg.algorithm = "most_popular".into();
        let s = run_on(&cfg, &data, &Registry::with_defaults()).unwrap();
        let m = fs::read_to_string(s.dir.join("metrics.csv")).unwrap();
        assert!(m.lines().nth(1).unwrap().starts_with("most_popular,dataset,,,"));
        assert!(s.best_epoch.is_none());
    }

    #[test]
    fn sweep_writes_every_cell() {
        let (data, cfg, _tmp) = small();
        let spec = SweepSpec {
            pi_values: vec![0.0, 1.0],
            triple_regimes: vec![TripleCount::Fixed(1), TripleCount::PerUserAverage],
        };
        let out = run_sweep(&cfg, &data, &spec).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert!(out.failures.is_empty());
        let table = fs::read_to_string(cfg.out.join("pi_sweep.csv")).unwrap();
        assert_eq!(table.lines().count(), 5);
        assert!(cfg.out.join("t_per_user_avg/updates_freq.csv").exists());
        assert!(cfg.out.join("t_1/rec_freq.csv").exists());
    }

    #[test]
    fn search_prefers_smaller_rate_on_ties() {
        let (data, mut cfg, _tmp) = small();
        cfg.algorithm = "most_popular".into();
        let out = hyperparameter_search(&cfg, &data, &Registry::with_defaults(), &[0.5, 0.01, 0.1]).unwrap();
        assert_eq!(out.rows.len(), 3);
        assert_eq!(out.best_learning_rate, 0.01);
        assert!(cfg.out.join("search.csv").exists());
    }

    #[test]
    fn unknown_algorithm_is_a_config_error() {
        let (data, mut cfg, _tmp) = small();
        cfg.algorithm = "nope".into();
        assert!(matches!(
            run_on(&cfg, &data, &Registry::with_defaults()),
            Err(Error::Config { field, .. }) if field == "algorithm"
        ));
    }
}
