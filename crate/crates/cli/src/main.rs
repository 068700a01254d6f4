use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand, ValueEnum};
use monoq::harness::{self, Checkpoint, FitKind, QGrid, RunConfig};
use monoq::oracles::parse_matrix_csv;

#[derive(Parser)]
#[command(name = "monoq", version, about = "Cooperative multi-agent Q-learning with monotonic mixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run; writes metrics.csv, config.json and checkpoint.bin.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train seeds 0..N into OUT/seed_k and aggregate them. MONOQ_THREADS
    /// caps the number of concurrent runs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint's mixer over a utility grid.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Global state as one CSV row, e.g. `0,0,1`.
        #[arg(long, allow_hyphen_values = true)]
        state: String,
        /// `agent=lo:hi:n` for swept agents, `agent=value` for fixed ones.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Best additive or monotone fit of a two-agent payoff matrix.
    Oracle {
        #[arg(long)]
        payoff: PathBuf,
        #[arg(long, value_enum)]
        fit: Fit,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fit {
    Additive,
    Monotone,
}

/// Invalid input exits with 2, failures while running with 1.
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

fn input<T>(r: monoq::Result<T>, what: &str) -> Result<T, Failure> {
    r.with_context(|| what.to_string()).map_err(Failure::Input)
}

fn runtime<T, E>(r: Result<T, E>, what: &str) -> Result<T, Failure>
where
    Result<T, E>: anyhow::Context<T, E>,
{
    r.with_context(|| what.to_string()).map_err(Failure::Runtime)
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let cfg = input(RunConfig::load(path), &format!("loading config {}", path.display()))?;
    input(cfg.validate(), &format!("validating config {}", path.display()))?;
    Ok(cfg)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let outcome = runtime(harness::run_to_dir(&cfg, &out), "training")?;
            if let Some(last) = outcome.log.last() {
                println!(
                    "env_steps {} episodes {} eval_return_median {} max_qtot_at_s0 {}",
                    outcome.env_steps,
                    outcome.episodes,
                    last.eval_return_median,
                    last.max_qtot_at_s0.map_or("-".to_string(), |v| v.to_string())
                );
            }
        }
        Command::Sweep { config, seeds, out } => {
            let cfg = load_config(&config)?;
            if seeds == 0 {
                return Err(Failure::Input(anyhow::anyhow!("--seeds must be at least 1")));
            }
            let res = runtime(harness::sweep(&cfg, seeds, &out, harness::sweep_threads()), "sweep")?;
            for (seed, msg) in &res.failures {
                eprintln!("seed {seed} failed: {msg}");
            }
            println!(
                "{} of {seeds} runs completed; aggregate in {}",
                res.logs.len(),
                out.join(harness::AGGREGATE_FILE).display()
            );
        }
        Command::Inspect { checkpoint, state, grid, out } => {
            let ck = input(Checkpoint::load(&checkpoint), &format!("loading checkpoint {}", checkpoint.display()))?;
            let state = input(harness::parse_state(&state), "parsing --state")?;
            let grid: QGrid = input(grid.parse(), "parsing --grid")?;
            let csv = input(harness::inspect_mixer(&ck, &state, &grid), "inspecting mixer")?;
            runtime(std::fs::write(&out, csv), &format!("writing {}", out.display()))?;
        }
        Command::Oracle { payoff, fit } => {
            let text = runtime(std::fs::read_to_string(&payoff), &format!("reading {}", payoff.display()))?;
            let matrix = input(parse_matrix_csv(&text), "parsing payoff")?;
            let kind = match fit {
                Fit::Additive => FitKind::Additive,
                Fit::Monotone => FitKind::Monotone,
            };
            print!("{}", input(harness::oracle_fit(&matrix, kind), "fitting")?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
