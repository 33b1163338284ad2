use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use federank::baselines::Registry;
use federank::data::{compute_stats, DatasetStats};
use federank::experiment::{
    hyperparameter_search, load_dataset, parse_f64_list, run_audit, run_single, run_sweep, ExperimentConfig, SweepSpec,
    DEFAULT_ALPHA_GRID,
};
use federank::federation::TripleCount;

#[derive(Parser)]
#[command(name = "federank", version, about = "Federated pair-wise recommendation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm and evaluate it on the test split.
    Run(Common),
    /// Federated training over a grid of transmission probabilities.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated probabilities (default 0,0.1,...,1).
        #[arg(long)]
        pi_grid: Option<String>,
        /// Comma-separated triple regimes, e.g. `1,per_user_avg`.
        #[arg(long)]
        t_modes: Option<String>,
    },
    /// Learning-rate search on the validation split.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha_grid: Option<String>,
    },
    /// Sign-inference attack on the transmitted updates.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pi_grid: Option<String>,
    },
    /// Dataset statistics after filtering.
    Stats(Common),
    /// List registered algorithms.
    Algorithms,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    pi: Option<f64>,
    /// Triples per client per round: a number or `per_user_avg`.
    #[arg(long = "t-mode")]
    t_mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            c.set(k.trim(), v)?;
        }
        if let Some(d) = &self.dataset {
            c.dataset = Some(d.clone());
        }
        if let Some(a) = &self.algorithm {
            c.algorithm = a.clone();
        }
        if let Some(p) = self.pi {
            c.pi = p;
        }
        if let Some(t) = &self.t_mode {
            c.triples = t.parse()?;
        }
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn pi_grid(s: &Option<String>) -> Result<Vec<f64>> {
    Ok(match s {
        Some(s) => parse_f64_list("pi_grid", s)?,
        None => SweepSpec::default().pi_values,
    })
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let registry = Registry::with_defaults();
    match cli.command {
        Command::Algorithms => {
            for n in registry.names() {
                println!("{n}");
            }
        }
        Command::Run(common) => {
            let c = common.config()?;
            let s = run_single(&c, &registry)?;
            let m = &s.metrics;
            println!(
                "{} P@{n}={:.4} R@{n}={:.4} IC@{n}={} G@{n}={:.4} -> {}",
                s.algorithm,
                m.precision_at_n,
                m.recall_at_n,
                m.item_coverage,
                m.gini,
                s.dir.display(),
                n = m.n
            );
        }
        Command::Sweep { common, pi_grid: grid, t_modes } => {
            let c = common.config()?;
            let mut spec = SweepSpec {
                pi_values: pi_grid(&grid)?,
                ..SweepSpec::default()
            };
            if let Some(t) = t_modes {
                spec.triple_regimes =
                    t.split(',').filter(|x| !x.trim().is_empty()).map(|x| x.trim().parse()).collect::<Result<Vec<TripleCount>, _>>()?;
            }
            let data = load_dataset(&c)?;
            let out = run_sweep(&c, &data, &spec)?;
            println!("{} cells written to {}", out.rows.len(), c.out.join("pi_sweep.csv").display());
            if !out.failures.is_empty() {
                for (pi, t, e) in &out.failures {
                    eprintln!("failed: T={} pi={pi}: {e}", t.label());
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Search { common, alpha_grid } => {
            let c = common.config()?;
            let grid = match alpha_grid {
                Some(s) => parse_f64_list("alpha_grid", &s)?,
                None => DEFAULT_ALPHA_GRID.to_vec(),
            };
            let data = load_dataset(&c)?;
            let out = hyperparameter_search(&c, &data, &registry, &grid)?;
            for r in &out.rows {
                println!("alpha={} validation P@{}={:.4}", r.learning_rate, c.top_n, r.validation_precision);
            }
            println!("best learning_rate = {}", out.best_learning_rate);
        }
        Command::Audit { common, pi_grid: grid } => {
            let c = common.config()?;
            let data = load_dataset(&c)?;
            let rows = run_audit(&c, &data, &pi_grid(&grid)?)?;
            println!("pi\tprecision\trecall");
            for r in rows {
                let f = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.4}"));
                println!("{}\t{}\t{}", r.pi, f(r.attack_precision), f(r.attack_recall));
            }
        }
        Command::Stats(common) => {
            let c = common.config()?;
            let data = load_dataset(&c)?;
            println!("{}\n{}", DatasetStats::CSV_HEADER, compute_stats(&data).csv_row());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
