use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::{aggregate, aggregate_to_csv, AggregateRow, Checkpoint};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::learner::{run_training, MetricLog, TrainingOutcome};
use crate::oracles::{matrix_to_csv, optimal_additive_fit, optimal_monotone_fit, sq_residual};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const STATUS_FILE: &str = "status.csv";

/// Trains one run and writes its metrics, the effective config and a
/// checkpoint into `out_dir`.
pub fn run_to_dir(cfg: &RunConfig, out_dir: &Path) -> Result<TrainingOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let outcome = run_training(cfg)?;
    std::fs::write(out_dir.join(METRICS_FILE), outcome.log.to_csv())?;
    std::fs::write(out_dir.join(CONFIG_FILE), serde_json::to_string_pretty(cfg)? + "\n")?;
    Checkpoint::from_learner(cfg, &outcome.learner, outcome.env_steps, outcome.episodes)
        .save(&out_dir.join(CHECKPOINT_FILE))?;
    Ok(outcome)
}

/// Loads a config, applies the seed override and runs it.
pub fn run(config_path: &Path, seed: Option<u64>, out_dir: &Path) -> Result<TrainingOutcome> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    run_to_dir(&cfg, out_dir)
}

/// Parallelism for sweeps: `MONOQ_THREADS` when set to a positive integer,
/// otherwise the available cores.
pub fn sweep_threads() -> usize {
    std::env::var("MONOQ_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub logs: Vec<(u64, MetricLog)>,
    pub failures: Vec<(u64, String)>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed_{seed}"))
}

/// Runs seeds `0..n_seeds` on up to `threads` workers, each into
/// `out_dir/seed_k`, then writes `aggregate.csv` over the runs that finished
/// and `status.csv` with one line per seed. Failing seeds are recorded, not
/// fatal, unless every seed fails.
pub fn sweep(cfg: &RunConfig, n_seeds: u64, out_dir: &Path, threads: usize) -> Result<SweepOutcome> {
    if n_seeds == 0 {
        return Err(Error::Config("a sweep needs at least one seed".into()));
    }
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let next = AtomicU64::new(0);
    let results: Mutex<Vec<(u64, std::result::Result<MetricLog, String>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, n_seeds as usize) {
            scope.spawn(|| loop {
                let seed = next.fetch_add(1, Ordering::Relaxed);
                if seed >= n_seeds {
                    break;
                }
                let res = run_to_dir(&cfg.clone().with_seed(seed), &seed_dir(out_dir, seed))
                    .map(|o| o.log)
                    .map_err(|e| e.to_string());
                results.lock().expect("no worker panics while holding the lock").push((seed, res));
            });
        }
    });
    let mut results = results.into_inner().expect("workers finished");
    results.sort_by_key(|(s, _)| *s);
    let mut status = String::from("seed,status,detail\n");
    let mut logs = Vec::new();
    let mut failures = Vec::new();
    for (seed, res) in results {
        match res {
            Ok(log) => {
                status.push_str(&format!("{seed},ok,\n"));
                logs.push((seed, log));
            }
            Err(msg) => {
                status.push_str(&format!("{seed},failed,\"{}\"\n", msg.replace('"', "'")));
                failures.push((seed, msg));
            }
        }
    }
    std::fs::write(out_dir.join(STATUS_FILE), status)?;
    if logs.is_empty() {
        return Err(Error::Run(format!("all {n_seeds} seeds failed; first: {}", failures[0].1)));
    }
    let only: Vec<MetricLog> = logs.iter().map(|(_, l)| l.clone()).collect();
    let agg = aggregate(&only);
    std::fs::write(out_dir.join(AGGREGATE_FILE), aggregate_to_csv(&agg))?;
    Ok(SweepOutcome { logs, failures, aggregate: agg })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitKind {
    Additive,
    Monotone,
}

impl std::str::FromStr for FitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(Self::Additive),
            "monotone" => Ok(Self::Monotone),
            _ => Err(Error::Config(format!("unknown fit `{s}`; expected additive or monotone"))),
        }
    }
}

/// Best fit of a two-agent payoff matrix within the chosen class, as CSV
/// with a trailing `# residual` comment holding the squared error.
pub fn oracle_fit(payoff: &[Vec<f64>], fit: FitKind) -> Result<String> {
    let fitted = match fit {
        FitKind::Additive => optimal_additive_fit(payoff)?,
        FitKind::Monotone => optimal_monotone_fit(payoff)?,
    };
    Ok(format!("{}# residual {}\n", matrix_to_csv(&fitted), sq_residual(payoff, &fitted)))
}
