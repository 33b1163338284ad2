use std::fs;

use federank::baselines::Registry;
use federank::data::synthetic::SyntheticSpec;
use federank::data::{InteractionDataset, Partition};
use federank::evaluation::evaluate;
use federank::experiment::{hyperparameter_search, run_on, run_sweep, ExperimentConfig, SweepSpec};
use federank::federation::{NullSink, TripleCount};

fn data() -> InteractionDataset {
    SyntheticSpec::default().split().unwrap()
}

fn config(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        epochs: 3,
        factors: 6,
        out: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn federated_single_client_matches_bpr_mf() {
    let d = data();
    let tmp = tempfile::tempdir().unwrap();
    let reg = Registry::with_defaults();
    let mut c = config(tmp.path());
    c.pi = 1.0;
    let mut fed = reg.build("federank", &c.params()).unwrap();
    c.algorithm = "bpr_mf".into();
    let mut bpr = reg.build("bpr_mf", &c.params()).unwrap();
    fed.fit(&d, &mut NullSink).unwrap();
    bpr.fit(&d, &mut NullSink).unwrap();
    let a = evaluate(fed.as_ref(), &d, 10, Partition::Test).unwrap();
    let b = evaluate(bpr.as_ref(), &d, 10, Partition::Test).unwrap();
    assert_eq!(a, b);
}

#[test]
fn saved_config_reruns_bit_identically() {
    let d = data();
    let tmp = tempfile::tempdir().unwrap();
    let mut c = config(&tmp.path().join("first"));
    c.pi = 0.6;
    c.triples = TripleCount::PerUserAverage;
    c.clients_per_round = 4;
    let reg = Registry::with_defaults();
    run_on(&c, &d, &reg).unwrap();

    let mut again = ExperimentConfig::load(&c.out.join("config.txt")).unwrap();
    again.out = tmp.path().join("second");
    run_on(&again, &d, &reg).unwrap();
    for f in ["metrics.csv", "items.csv", "users.csv", "telemetry_rounds.csv", "item_updates.csv", "epochs.csv"] {
        assert_eq!(
            fs::read(c.out.join(f)).unwrap(),
            fs::read(again.out.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn search_argmax_matches_exhaustive_rerun() {
    let d = data();
    let tmp = tempfile::tempdir().unwrap();
    let mut c = config(tmp.path());
    c.algorithm = "bpr_mf".into();
    let reg = Registry::with_defaults();
    let grid = [0.005, 0.05, 0.5];
    let out = hyperparameter_search(&c, &d, &reg, &grid).unwrap();

    let mut best = (f64::NEG_INFINITY, 0.0);
    for a in grid {
        c.learning_rate = a;
        let mut m = reg.build("bpr_mf", &c.params()).unwrap();
        m.fit(&d, &mut NullSink).unwrap();
        let p = evaluate(m.as_ref(), &d, 10, Partition::Validation).unwrap().precision_at_n;
        if p > best.0 {
            best = (p, a);
        }
    }
    assert_eq!(out.best_learning_rate, best.1);
    assert_eq!(hyperparameter_search(&c, &d, &reg, &[0.05]).unwrap().best_learning_rate, 0.05);
}

#[test]
fn sweep_has_one_row_per_cell() {
    let d = data();
    let tmp = tempfile::tempdir().unwrap();
    let c = config(tmp.path());
    let spec = SweepSpec {
        pi_values: vec![0.2, 0.7, 1.0],
        triple_regimes: vec![TripleCount::Fixed(1)],
    };
    let out = run_sweep(&c, &d, &spec).unwrap();
    assert_eq!(out.rows.len(), 3);
    let table = fs::read_to_string(tmp.path().join("pi_sweep.csv")).unwrap();
    let pis: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(pis, ["0.2", "0.7", "1"]);
    let upd = fs::read_to_string(tmp.path().join("updates_freq.csv")).unwrap();
    assert!(upd.starts_with("pi,rank,value\n"));
}
