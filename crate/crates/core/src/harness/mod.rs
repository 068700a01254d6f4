//! Experiment plumbing: single runs and seed sweeps on disk, checkpoints,
//! cross-seed aggregation, mixer inspection and the payoff-fit oracle.

mod aggregate;
mod checkpoint;
mod experiment;
mod inspect;

pub use aggregate::{
    aggregate, aggregate_columns, aggregate_to_csv, nearest_rank, AggregateRow, Quartiles, AGGREGATED_METRICS,
    AGGREGATE_HEADER,
};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use experiment::{
    oracle_fit, run, run_to_dir, seed_dir, sweep, sweep_threads, FitKind, SweepOutcome, AGGREGATE_FILE,
    CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, STATUS_FILE,
};
pub use inspect::{inspect_mixer, mixer_surface, parse_state, GridAxis, QGrid, INSPECT_HEADER};

pub use crate::config::{AlgoConfig, EnvConfig, EvalConfig, RunConfig, TrainConfig};
pub use crate::learner::{MetricLog, MetricRow, METRICS_COLUMNS, METRICS_HEADER};
